// Orchestration layer behind the command-line tool: one RunConfig drives
// prepare / train / evaluate / explain / anova, and every file the commands
// produce embeds the config echo plus tool version so runs stay reproducible.

#ifndef PROCATTN_PIPELINE_HPP
#define PROCATTN_PIPELINE_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "procattn/encode.hpp"
#include "procattn/evalstats.hpp"
#include "procattn/eventlog.hpp"
#include "procattn/interpret.hpp"
#include "procattn/model.hpp"

namespace procattn {

struct RunConfig {
    // data
    std::string log_path;
    LogProfile profile;
    // prefix generation
    int min_prefix_length = 1;
    int max_prefix_length = 0;  // 0 = no cap
    bool include_end_label = false;
    // encoding
    TimeUnit time_unit = TimeUnit::Days;
    std::string scaler = "maxabs";  // "maxabs" | "identity"
    // model
    Architecture architecture = Architecture::Shared;
    int hidden_size = 50;
    int activity_embedding_dim = 0;  // 0 = activity vocabulary size
    int resource_embedding_dim = 0;  // 0 = resource vocabulary size
    std::uint64_t seed = 1;
    // training
    int epochs = 50;
    int batch_size = 64;
    double lr = 0.001;
    int patience = 5;
    double target_accuracy = -1.0;  // stop once validation reaches this (<0 off)
    double train_fraction = 0.7;
    int repeats = 1;  // artifacts trained under seed, seed+1, ...
    // explanation defaults
    int top_k = kDefaultTopK;
    int window = kDefaultAlignmentWindow;
    // output
    std::string out_dir = "out";
    bool quiet = false;

    // Merges recognised keys from a JSON object; unknown keys are rejected so
    // typos fail loudly. Values not present keep their current setting.
    void merge_json_text(const std::string& text);
    static RunConfig from_json_file(const std::string& path);

    // Canonical JSON echo (sorted keys) stamped into every output file.
    std::string to_json_text() const;

    void validate() const;  // throws ConfigError on out-of-range settings
};

// --- NDJSON plumbing shared by the commands -------------------------------
//
// Prefix dumps are newline-delimited JSON. The first line is a header record
// ({"kind":"header", "tool":..., "config":...}); data lines carry one prefix
// each and, after evaluation, the prediction columns for that prefix.

struct PrefixRecord {
    PrefixTrace prefix;
    // prediction columns; absent until an evaluate pass fills them in
    bool has_prediction = false;
    std::string predicted;
    double probability = 0.0;
    int rank_of_actual = 0;
    bool correct = false;
};

void write_prefix_dump(const std::string& path, const std::vector<PrefixRecord>& records,
                       const RunConfig& config);
std::vector<PrefixRecord> read_prefix_dump(const std::string& path);

std::vector<PrefixTrace> prefixes_of(const std::vector<PrefixRecord>& records);

// --- commands --------------------------------------------------------------

struct PrepareResult {
    LogSummary summary;
    std::size_t prefix_count = 0;
    std::string prefixes_path;
    std::string summary_path;
};

// Parses the log, builds traces, generates prefixes, writes
// <out>/prefixes.ndjson and <out>/summary.json.
PrepareResult cmd_prepare(const RunConfig& config);

struct TrainRunOutput {
    std::uint64_t seed = 0;
    std::string artifact_path;
    std::string log_path;
    int best_epoch = -1;
    double best_val_accuracy = 0.0;
    int epochs_run = 0;
    std::size_t skipped_unknown_targets = 0;
};

struct TrainCommandResult {
    std::vector<TrainRunOutput> runs;
    std::string test_prefixes_path;
    std::size_t train_prefix_count = 0;
    std::size_t test_prefix_count = 0;
};

// Splits prefixes case-blind at train_fraction, fits vocabularies and the
// time scaler on the training side, trains `repeats` models under seeds
// seed, seed+1, ..., and dumps the held-out prefixes for evaluation. The
// held-out split doubles as the validation set for early stopping.
TrainCommandResult cmd_train(const RunConfig& config);

struct EvaluateResult {
    MetricReport report;
    ConfusionMatrix matrix;
    std::size_t predicted_rows = 0;
    std::string predictions_path;
    std::string metrics_path;
    std::string confusion_path;
};

EvaluateResult cmd_evaluate(const RunConfig& config, const std::string& artifact_path,
                            const std::string& prefixes_path);

struct ExplainResult {
    std::size_t local_count = 0;
    GlobalExplanation global;
    std::string local_path;
    std::string global_path;
    std::string plot_path;
};

// Reads a prefix/prediction dump, re-encodes it with the artifact, emits
// per-prefix local explanations for the cohort, the aggregated global
// explanation, and a flat CSV for plotting.
ExplainResult cmd_explain(const RunConfig& config, const std::string& artifact_path,
                          const std::string& prefixes_path, const std::string& decision_point,
                          const std::string& target, CohortSelector selector, int k,
                          int window);

struct AnovaCommandResult {
    AnovaResult result;
    std::string statistic;  // column compared, or "summary"
    std::string output_path;
};

// Valid statistic names for dump-based comparison.
// rank: rank_of_actual; probability: predicted-class probability;
// correct: 0/1 hit indicator; length: prefix length.
std::vector<std::string> anova_statistics();

AnovaCommandResult cmd_anova(const RunConfig& config, const std::string& dump_a,
                             const std::string& dump_b, const std::string& statistic);

// Summary mode: JSON file {"groups":[{"name","count","sum","mean","variance"},...]}.
AnovaCommandResult cmd_anova_summary(const RunConfig& config, const std::string& summary_path);

}  // namespace procattn

#endif
