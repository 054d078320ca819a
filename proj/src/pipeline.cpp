#include "procattn/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace procattn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json profile_json(const LogProfile& p) {
    json j;
    j["format"] = p.format;
    j["delimiter"] = std::string(1, p.delimiter);
    j["case_column"] = p.case_column;
    j["activity_column"] = p.activity_column;
    j["timestamp_column"] = p.timestamp_column;
    j["resource_column"] = p.resource_column;
    j["lifecycle_column"] = p.lifecycle_column;
    j["timestamp_pattern"] = p.timestamp_pattern;
    j["null_tokens"] = p.null_tokens;
    j["completed_only"] = p.completed_only;
    j["activity_filter"] = p.activity_filter;
    return j;
}

json config_json(const RunConfig& c) {
    json j;
    j["log_path"] = c.log_path;
    j["profile"] = profile_json(c.profile);
    j["min_prefix_length"] = c.min_prefix_length;
    j["max_prefix_length"] = c.max_prefix_length;
    j["include_end_label"] = c.include_end_label;
    j["time_unit"] = to_string(c.time_unit);
    j["scaler"] = c.scaler;
    j["architecture"] = to_string(c.architecture);
    j["hidden_size"] = c.hidden_size;
    j["activity_embedding_dim"] = c.activity_embedding_dim;
    j["resource_embedding_dim"] = c.resource_embedding_dim;
    j["seed"] = c.seed;
    j["epochs"] = c.epochs;
    j["batch_size"] = c.batch_size;
    j["lr"] = c.lr;
    j["patience"] = c.patience;
    j["target_accuracy"] = c.target_accuracy;
    j["train_fraction"] = c.train_fraction;
    j["repeats"] = c.repeats;
    j["top_k"] = c.top_k;
    j["window"] = c.window;
    j["out_dir"] = c.out_dir;
    j["quiet"] = c.quiet;
    return j;
}

json tool_json() {
    json j;
    j["name"] = kToolName;
    j["version"] = kToolVersion;
    return j;
}

// Common preamble of every JSON output: kind + tool identity + config echo.
json stamped(const char* kind, const RunConfig& config) {
    json j;
    j["kind"] = kind;
    j["tool"] = tool_json();
    j["config"] = config_json(config);
    j["seed"] = config.seed;
    return j;
}

fs::path ensure_out_dir(const RunConfig& config) {
    fs::path dir(config.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + config.out_dir +
                              "': " + ec.message());
    return dir;
}

void write_text_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

void write_json_file(const fs::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

json read_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    try {
        return json::parse(os.str());
    } catch (const json::exception& e) {
        throw DataError("'" + path + "' is not valid JSON: " + e.what());
    }
}

// "# ..." comment stamp used by the CSV outputs.
std::string csv_stamp(const RunConfig& config) {
    std::ostringstream os;
    os << "# tool: " << kToolName << " " << kToolVersion << "\n";
    os << "# config: " << config_json(config).dump() << "\n";
    os << "# seed: " << config.seed << "\n";
    return os.str();
}

std::string file_stem(const std::string& path) {
    return fs::path(path).stem().string();
}

template <typename T>
void read_key(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

json prefix_record_json(const PrefixRecord& record) {
    json j;
    j["kind"] = "prefix";
    j["case_id"] = record.prefix.trace_case_id;
    j["length"] = record.prefix.length;
    j["prefix_id"] = record.prefix.trace_case_id + "#" + std::to_string(record.prefix.length);
    j["target"] = record.prefix.target;
    json events = json::array();
    for (const Event& e : record.prefix.events) {
        json ej;
        ej["activity"] = e.activity;
        if (e.resource) ej["resource"] = *e.resource;
        ej["timestamp"] = format_timestamp(e.timestamp_ms);
        if (e.lifecycle) ej["lifecycle"] = *e.lifecycle;
        events.push_back(std::move(ej));
    }
    j["events"] = std::move(events);
    if (record.has_prediction) {
        j["predicted"] = record.predicted;
        j["probability"] = record.probability;
        j["rank_of_actual"] = record.rank_of_actual;
        j["correct"] = record.correct;
    }
    return j;
}

PrefixRecord prefix_record_from_json(const json& j, const std::string& path,
                                     std::size_t line_number) {
    auto fail = [&](const std::string& why) -> DataError {
        return DataError(path + ":" + std::to_string(line_number) + ": " + why);
    };
    PrefixRecord record;
    try {
        record.prefix.trace_case_id = j.at("case_id").get<std::string>();
        record.prefix.target = j.at("target").get<std::string>();
        for (const json& ej : j.at("events")) {
            Event e;
            e.case_id = record.prefix.trace_case_id;
            e.activity = ej.at("activity").get<std::string>();
            if (ej.contains("resource")) e.resource = ej.at("resource").get<std::string>();
            e.timestamp_ms = parse_iso8601(ej.at("timestamp").get<std::string>());
            if (ej.contains("lifecycle")) e.lifecycle = ej.at("lifecycle").get<std::string>();
            record.prefix.events.push_back(std::move(e));
        }
        record.prefix.length = static_cast<int>(record.prefix.events.size());
        if (j.contains("length") && j.at("length").get<int>() != record.prefix.length) {
            throw fail("declared length " + std::to_string(j.at("length").get<int>()) +
                       " does not match " + std::to_string(record.prefix.length) +
                       " stored events");
        }
        if (j.contains("predicted")) {
            record.has_prediction = true;
            record.predicted = j.at("predicted").get<std::string>();
            record.probability = j.at("probability").get<double>();
            record.rank_of_actual = j.at("rank_of_actual").get<int>();
            record.correct = j.at("correct").get<bool>();
        }
    } catch (const json::exception& e) {
        throw fail(std::string("bad prefix record: ") + e.what());
    }
    if (record.prefix.events.empty()) throw fail("prefix record has no events");
    return record;
}

// Prefix loading shared by train: a .ndjson path is treated as an existing
// prefix dump, anything else is parsed as a raw event log per the profile.
std::vector<PrefixTrace> load_prefixes(const RunConfig& config, LogSummary* summary = nullptr,
                                       BuildStats* stats = nullptr) {
    if (config.log_path.empty()) throw ConfigError("log path is required");
    if (fs::path(config.log_path).extension() == ".ndjson") {
        return prefixes_of(read_prefix_dump(config.log_path));
    }
    const std::vector<Event> events = parse_log_file(config.log_path, config.profile);
    const std::vector<Trace> traces = build_traces(events, config.profile, stats);
    if (traces.empty()) throw DataError("no traces in log '" + config.log_path + "'");
    if (summary) *summary = summarize(traces);
    const int cap = config.max_prefix_length > 0 ? config.max_prefix_length
                                                 : std::numeric_limits<int>::max();
    return generate_all_prefixes(traces, config.min_prefix_length, cap,
                                 config.include_end_label);
}

int longest_prefix(const std::vector<PrefixTrace>& prefixes) {
    int longest = 1;
    for (const PrefixTrace& p : prefixes) longest = std::max(longest, p.length);
    return longest;
}

TimeScaler fit_scaler(const RunConfig& config, const std::vector<PrefixTrace>& train) {
    if (config.scaler == "identity") return TimeScaler::identity();
    std::vector<double> values;
    for (const PrefixTrace& p : train) {
        for (double v : elapsed_time(p, config.time_unit)) values.push_back(v);
    }
    return TimeScaler::fit_maxabs(values);
}

json anova_json(const AnovaCommandResult& command, const RunConfig& config,
                const std::vector<std::string>& inputs) {
    json j = stamped("anova", config);
    j["statistic"] = command.statistic;
    j["inputs"] = inputs;
    json groups = json::array();
    for (const AnovaGroup& g : command.result.groups) {
        json gj;
        gj["name"] = g.name;
        gj["count"] = g.count;
        gj["sum"] = g.sum;
        gj["mean"] = g.mean;
        gj["variance"] = g.variance;
        groups.push_back(std::move(gj));
    }
    j["groups"] = std::move(groups);
    j["ss_between"] = command.result.ss_between;
    j["ss_within"] = command.result.ss_within;
    j["df_between"] = command.result.df_between;
    j["df_within"] = command.result.df_within;
    j["ms_between"] = command.result.ms_between;
    j["ms_within"] = command.result.ms_within;
    j["f"] = command.result.f;
    j["p_value"] = command.result.p_value;
    return j;
}

}  // namespace

void RunConfig::merge_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    static const std::vector<std::string> known = {
        "log_path", "profile", "min_prefix_length", "max_prefix_length",
        "include_end_label", "time_unit", "scaler", "architecture", "hidden_size",
        "activity_embedding_dim", "resource_embedding_dim", "seed", "epochs",
        "batch_size", "lr", "patience", "target_accuracy", "train_fraction",
        "repeats", "top_k", "window", "out_dir", "quiet"};
    for (const auto& item : j.items()) {
        if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
            throw ConfigError("unknown config key '" + item.key() + "'");
        }
    }
    try {
        read_key(j, "log_path", log_path);
        if (j.contains("profile")) profile = LogProfile::from_json_text(j.at("profile").dump());
        read_key(j, "min_prefix_length", min_prefix_length);
        read_key(j, "max_prefix_length", max_prefix_length);
        read_key(j, "include_end_label", include_end_label);
        if (j.contains("time_unit"))
            time_unit = time_unit_from_string(j.at("time_unit").get<std::string>());
        read_key(j, "scaler", scaler);
        if (j.contains("architecture"))
            architecture = architecture_from_string(j.at("architecture").get<std::string>());
        read_key(j, "hidden_size", hidden_size);
        read_key(j, "activity_embedding_dim", activity_embedding_dim);
        read_key(j, "resource_embedding_dim", resource_embedding_dim);
        read_key(j, "seed", seed);
        read_key(j, "epochs", epochs);
        read_key(j, "batch_size", batch_size);
        read_key(j, "lr", lr);
        read_key(j, "patience", patience);
        read_key(j, "target_accuracy", target_accuracy);
        read_key(j, "train_fraction", train_fraction);
        read_key(j, "repeats", repeats);
        read_key(j, "top_k", top_k);
        read_key(j, "window", window);
        read_key(j, "out_dir", out_dir);
        read_key(j, "quiet", quiet);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
}

RunConfig RunConfig::from_json_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    RunConfig config;
    config.merge_json_text(os.str());
    return config;
}

std::string RunConfig::to_json_text() const { return config_json(*this).dump(2) + "\n"; }

void RunConfig::validate() const {
    if (min_prefix_length < 1) throw ConfigError("min_prefix_length must be >= 1");
    if (max_prefix_length != 0 && max_prefix_length < min_prefix_length) {
        throw ConfigError("max_prefix_length must be 0 (no cap) or >= min_prefix_length");
    }
    if (scaler != "maxabs" && scaler != "identity") {
        throw ConfigError("scaler must be 'maxabs' or 'identity', got '" + scaler + "'");
    }
    if (hidden_size < 1) throw ConfigError("hidden_size must be >= 1");
    if (activity_embedding_dim < 0 || resource_embedding_dim < 0) {
        throw ConfigError("embedding dims must be >= 0 (0 = vocabulary size)");
    }
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
    if (patience < 0) throw ConfigError("patience must be >= 0");
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0)) {
        throw ConfigError("train_fraction must lie strictly between 0 and 1");
    }
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (top_k < 1) throw ConfigError("top_k must be >= 1");
    if (window < 1) throw ConfigError("window must be >= 1");
    if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

void write_prefix_dump(const std::string& path, const std::vector<PrefixRecord>& records,
                       const RunConfig& config) {
    std::ostringstream os;
    os << stamped("header", config).dump() << "\n";
    for (const PrefixRecord& record : records) {
        os << prefix_record_json(record).dump() << "\n";
    }
    write_text_file(path, os.str());
}

std::vector<PrefixRecord> read_prefix_dump(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<PrefixRecord> records;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(path + ":" + std::to_string(line_number) +
                            ": not valid JSON: " + e.what());
        }
        if (j.is_object() && j.value("kind", "") == "header") continue;
        records.push_back(prefix_record_from_json(j, path, line_number));
    }
    return records;
}

std::vector<PrefixTrace> prefixes_of(const std::vector<PrefixRecord>& records) {
    std::vector<PrefixTrace> prefixes;
    prefixes.reserve(records.size());
    for (const PrefixRecord& r : records) prefixes.push_back(r.prefix);
    return prefixes;
}

PrepareResult cmd_prepare(const RunConfig& config) {
    config.validate();
    const fs::path dir = ensure_out_dir(config);

    LogSummary summary;
    BuildStats stats;
    const std::vector<PrefixTrace> prefixes = load_prefixes(config, &summary, &stats);

    std::vector<PrefixRecord> records(prefixes.size());
    for (std::size_t i = 0; i < prefixes.size(); ++i) records[i].prefix = prefixes[i];

    PrepareResult result;
    result.summary = summary;
    result.prefix_count = prefixes.size();
    result.prefixes_path = (dir / "prefixes.ndjson").string();
    result.summary_path = (dir / "summary.json").string();

    write_prefix_dump(result.prefixes_path, records, config);

    json j = stamped("summary", config);
    j["log"]["cases"] = summary.cases;
    j["log"]["events"] = summary.events;
    j["log"]["distinct_activities"] = summary.distinct_activities;
    j["log"]["avg_case_length"] = summary.avg_case_length;
    j["log"]["max_case_length"] = summary.max_case_length;
    j["log"]["variants"] = summary.variants;
    j["prefix_count"] = prefixes.size();
    j["build"]["filtered_events"] = stats.filtered_events;
    j["build"]["dropped_cases"] = stats.dropped_cases;
    j["build"]["zero_duration_duplicates"] = stats.zero_duration_duplicates;
    write_json_file(result.summary_path, j);
    return result;
}

TrainCommandResult cmd_train(const RunConfig& config) {
    config.validate();
    const fs::path dir = ensure_out_dir(config);

    const std::vector<PrefixTrace> prefixes = load_prefixes(config);
    auto [train_prefixes, test_prefixes] =
        split_prefixes(prefixes, config.train_fraction, config.seed);
    if (train_prefixes.empty() || test_prefixes.empty()) {
        throw DataError("split produced an empty side (" +
                        std::to_string(train_prefixes.size()) + " train / " +
                        std::to_string(test_prefixes.size()) + " test)");
    }

    auto [activity_vocab, resource_vocab] =
        fit_vocabularies(train_prefixes, config.include_end_label);
    const TimeScaler scaler = fit_scaler(config, train_prefixes);
    const int pad_length = std::max(longest_prefix(train_prefixes), longest_prefix(test_prefixes));

    const EncodedDataset train_ds = encode_dataset(train_prefixes, activity_vocab,
                                                   resource_vocab, pad_length, scaler,
                                                   config.time_unit);
    const EncodedDataset test_ds = encode_dataset(test_prefixes, activity_vocab,
                                                  resource_vocab, pad_length, scaler,
                                                  config.time_unit);

    TrainCommandResult result;
    result.train_prefix_count = train_prefixes.size();
    result.test_prefix_count = test_prefixes.size();
    result.test_prefixes_path = (dir / "test_prefixes.ndjson").string();

    std::vector<PrefixRecord> test_records(test_prefixes.size());
    for (std::size_t i = 0; i < test_prefixes.size(); ++i) {
        test_records[i].prefix = test_prefixes[i];
    }
    write_prefix_dump(result.test_prefixes_path, test_records, config);

    const std::string arch = to_string(config.architecture);
    TrainConfig tc;
    tc.epochs = config.epochs;
    tc.batch_size = config.batch_size;
    tc.lr = config.lr;
    tc.patience = config.patience;
    tc.target_accuracy = config.target_accuracy;

    for (int r = 0; r < config.repeats; ++r) {
        const std::uint64_t run_seed = config.seed + static_cast<std::uint64_t>(r);
        ModelConfig mc;
        mc.architecture = config.architecture;
        mc.hidden_size = config.hidden_size;
        mc.activity_embedding_dim = config.activity_embedding_dim;
        mc.resource_embedding_dim = config.resource_embedding_dim;
        mc.seed = run_seed;

        TrainResult trained = train_model(train_ds, test_ds, mc, tc);

        TrainRunOutput run;
        run.seed = run_seed;
        const std::string tag = arch + "_seed" + std::to_string(run_seed);
        run.artifact_path = (dir / ("model_" + tag + ".bin")).string();
        run.log_path = (dir / ("training_log_" + tag + ".json")).string();
        run.best_epoch = trained.best_epoch;
        run.best_val_accuracy = trained.best_val_accuracy;
        run.epochs_run = static_cast<int>(trained.log.size());
        run.skipped_unknown_targets = trained.skipped_unknown_targets;

        trained.artifact.save(run.artifact_path);

        json lj = stamped("training_log", config);
        lj["seed"] = run_seed;  // the seed this run actually trained under
        lj["architecture"] = arch;
        lj["artifact"] = run.artifact_path;
        lj["best_epoch"] = trained.best_epoch;
        lj["best_val_accuracy"] = trained.best_val_accuracy;
        lj["skipped_unknown_targets"] = trained.skipped_unknown_targets;
        json epochs = json::array();
        for (const EpochStats& s : trained.log) {
            json ej;
            ej["epoch"] = s.epoch;
            ej["train_loss"] = s.train_loss;
            ej["val_accuracy"] = s.val_accuracy;
            epochs.push_back(std::move(ej));
        }
        lj["epochs"] = std::move(epochs);
        write_json_file(run.log_path, lj);

        result.runs.push_back(std::move(run));
    }

    json tj = stamped("train_summary", config);
    tj["train_prefix_count"] = result.train_prefix_count;
    tj["test_prefix_count"] = result.test_prefix_count;
    tj["test_prefixes"] = result.test_prefixes_path;
    json runs = json::array();
    for (const TrainRunOutput& run : result.runs) {
        json rj;
        rj["seed"] = run.seed;
        rj["artifact"] = run.artifact_path;
        rj["training_log"] = run.log_path;
        rj["best_epoch"] = run.best_epoch;
        rj["best_val_accuracy"] = run.best_val_accuracy;
        rj["epochs_run"] = run.epochs_run;
        runs.push_back(std::move(rj));
    }
    tj["runs"] = std::move(runs);
    write_json_file(dir / "train_summary.json", tj);
    return result;
}

EvaluateResult cmd_evaluate(const RunConfig& config, const std::string& artifact_path,
                            const std::string& prefixes_path) {
    config.validate();
    const fs::path dir = ensure_out_dir(config);

    const ModelArtifact artifact = ModelArtifact::load(artifact_path);
    std::vector<PrefixRecord> records = read_prefix_dump(prefixes_path);
    if (records.empty()) throw DataError("'" + prefixes_path + "' holds no prefixes");

    const EncodedDataset encoded = artifact.encode(prefixes_of(records));
    bool any_known_target = false;
    for (int t : encoded.targets) {
        if (t >= kFirstRealIndex) {
            any_known_target = true;
            break;
        }
    }
    if (!any_known_target) {
        throw DataError("vocabulary mismatch: no target in '" + prefixes_path +
                        "' is part of the model's activity vocabulary");
    }

    const std::vector<Prediction> predictions = predict(artifact, encoded);

    std::vector<std::string> actual, predicted;
    actual.reserve(records.size());
    predicted.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].has_prediction = true;
        records[i].predicted = predictions[i].label;
        records[i].probability = predictions[i].probability;
        records[i].rank_of_actual = predictions[i].rank_of_actual;
        records[i].correct = predictions[i].correct;
        actual.push_back(records[i].prefix.target);
        predicted.push_back(predictions[i].label);
    }

    // Class order: the model's classes first, then any extra labels that only
    // occur as actual values (never predictable, but countable).
    std::vector<std::string> classes;
    for (int c = 0; c < artifact.num_classes(); ++c) classes.push_back(artifact.class_label(c));
    for (const std::string& label : actual) {
        if (std::find(classes.begin(), classes.end(), label) == classes.end()) {
            classes.push_back(label);
        }
    }

    EvaluateResult result;
    result.matrix = confusion(actual, predicted, classes);
    result.report = metrics(result.matrix);
    result.predicted_rows = records.size();

    const std::string stem = file_stem(artifact_path);
    result.predictions_path = (dir / ("predictions_" + stem + ".ndjson")).string();
    result.metrics_path = (dir / ("metrics_" + stem + ".json")).string();
    result.confusion_path = (dir / ("confusion_" + stem + ".csv")).string();

    write_prefix_dump(result.predictions_path, records, config);

    json mj = stamped("metrics", config);
    mj["artifact"] = artifact_path;
    mj["test_prefixes"] = prefixes_path;
    mj["rows"] = records.size();
    mj["accuracy"] = result.report.accuracy;
    mj["macro_precision"] = result.report.macro_precision;
    mj["macro_recall"] = result.report.macro_recall;
    mj["macro_f1"] = result.report.macro_f1;
    mj["weighted_precision"] = result.report.weighted_precision;
    mj["weighted_recall"] = result.report.weighted_recall;
    mj["weighted_f1"] = result.report.weighted_f1;
    json per_class = json::array();
    for (const ClassMetrics& m : result.report.per_class) {
        json cj;
        cj["label"] = m.label;
        cj["tp"] = m.tp;
        cj["fp"] = m.fp;
        cj["fn"] = m.fn;
        cj["tn"] = m.tn;
        cj["support"] = m.support;
        cj["precision"] = m.precision;
        cj["recall"] = m.recall;
        cj["f1"] = m.f1;
        cj["precision_zero_division"] = m.precision_zero_division;
        cj["recall_zero_division"] = m.recall_zero_division;
        cj["f1_zero_division"] = m.f1_zero_division;
        per_class.push_back(std::move(cj));
    }
    mj["per_class"] = std::move(per_class);
    mj["confusion"]["classes"] = result.matrix.classes;
    json count_rows = json::array();
    for (std::size_t a = 0; a < result.matrix.classes.size(); ++a) {
        json row = json::array();
        for (std::size_t p = 0; p < result.matrix.classes.size(); ++p) {
            row.push_back(result.matrix.at(a, p));
        }
        count_rows.push_back(std::move(row));
    }
    mj["confusion"]["counts"] = std::move(count_rows);
    write_json_file(result.metrics_path, mj);

    std::ostringstream csv;
    csv << csv_stamp(config);
    csv << "actual";
    for (const std::string& c : result.matrix.classes) csv << "," << c;
    csv << "\n";
    for (std::size_t a = 0; a < result.matrix.classes.size(); ++a) {
        csv << result.matrix.classes[a];
        for (std::size_t p = 0; p < result.matrix.classes.size(); ++p) {
            csv << "," << result.matrix.at(a, p);
        }
        csv << "\n";
    }
    write_text_file(result.confusion_path, csv.str());
    return result;
}

ExplainResult cmd_explain(const RunConfig& config, const std::string& artifact_path,
                          const std::string& prefixes_path, const std::string& decision_point,
                          const std::string& target, CohortSelector selector, int k,
                          int window) {
    config.validate();
    if (k < 1) throw ConfigError("top-k must be >= 1");
    const fs::path dir = ensure_out_dir(config);

    const ModelArtifact artifact = ModelArtifact::load(artifact_path);
    const std::vector<PrefixRecord> records = read_prefix_dump(prefixes_path);
    if (records.empty()) throw DataError("'" + prefixes_path + "' holds no prefixes");
    const EncodedDataset encoded = artifact.encode(prefixes_of(records));

    ExplainResult result;
    result.global =
        global_explanation(artifact, encoded, decision_point, target, selector, window);

    // Cohort membership, recomputed to pick the rows for local output: last
    // real event at the decision point and the selector-side label on target.
    const std::vector<Prediction> predictions = predict(artifact, encoded);
    const std::size_t L = static_cast<std::size_t>(encoded.pad_length);
    std::vector<std::size_t> cohort;
    for (std::size_t r = 0; r < encoded.num_prefixes(); ++r) {
        const int last = encoded.activity[(r + 1) * L - 1];
        if (artifact.activity_vocab.label_of(last) != decision_point) continue;
        const std::string label = selector == CohortSelector::Predicted
                                      ? predictions[r].label
                                      : records[r].prefix.target;
        if (label == target) cohort.push_back(r);
    }

    const std::vector<LocalExplanation> locals =
        local_explanations(artifact, encoded.subset(cohort), k);
    result.local_count = locals.size();

    std::ostringstream os;
    os << stamped("header", config).dump() << "\n";
    for (const LocalExplanation& local : locals) {
        json j;
        j["kind"] = "local";
        j["prefix_id"] = local.prefix_id;
        j["predicted"] = local.predicted;
        j["probability"] = local.probability;
        j["actual"] = local.actual;
        j["approximate"] = local.approximate;
        j["top_events"] = local.top_events;
        json rows = json::array();
        for (const FeatureWeightRow& row : local.rows) {
            json rj;
            rj["event_position"] = row.event_position;
            rj["reverse_offset"] = row.reverse_offset;
            rj["activity"] = row.activity_label;
            rj["resource"] = row.resource_label;
            rj["alpha"] = row.alpha;
            rj["weights"]["activity"] = row.weights.activity;
            rj["weights"]["resource"] = row.weights.resource;
            rj["weights"]["time"] = row.weights.time;
            rows.push_back(std::move(rj));
        }
        j["rows"] = std::move(rows);
        os << j.dump() << "\n";
    }
    result.local_path = (dir / "local_explanations.ndjson").string();
    write_text_file(result.local_path, os.str());

    json gj = stamped("global_explanation", config);
    gj["artifact"] = artifact_path;
    gj["decision_point"] = result.global.decision_point;
    gj["target"] = result.global.target;
    gj["selector"] = to_string(result.global.selector);
    gj["window"] = result.global.window;
    gj["cohort_size"] = result.global.cohort_size;
    gj["approximate"] = result.global.approximate;
    json cells = json::array();
    for (const GlobalCell& cell : result.global.cells) {
        json cj;
        cj["offset"] = cell.offset;
        cj["category"] = cell.category;
        cj["mean"] = cell.mean;
        cj["mean_abs"] = cell.mean_abs;
        cj["count"] = cell.count;
        cells.push_back(std::move(cj));
    }
    gj["cells"] = std::move(cells);
    json value_cells = json::array();
    for (const GlobalValueCell& cell : result.global.value_cells) {
        json cj;
        cj["offset"] = cell.offset;
        cj["category"] = cell.category;
        cj["value"] = cell.value;
        cj["mean"] = cell.mean;
        cj["mean_abs"] = cell.mean_abs;
        cj["count"] = cell.count;
        value_cells.push_back(std::move(cj));
    }
    gj["value_cells"] = std::move(value_cells);
    result.global_path = (dir / "global_explanation.json").string();
    write_json_file(result.global_path, gj);

    std::ostringstream csv;
    csv << csv_stamp(config);
    csv << "offset,category,value,mean,mean_abs,count\n";
    auto csv_number = [](double v) {
        std::ostringstream s;
        s.precision(17);
        s << v;
        return s.str();
    };
    for (const GlobalCell& cell : result.global.cells) {
        csv << cell.offset << "," << cell.category << ",," << csv_number(cell.mean) << ","
            << csv_number(cell.mean_abs) << "," << cell.count << "\n";
    }
    for (const GlobalValueCell& cell : result.global.value_cells) {
        csv << cell.offset << "," << cell.category << "," << cell.value << ","
            << csv_number(cell.mean) << "," << csv_number(cell.mean_abs) << "," << cell.count
            << "\n";
    }
    result.plot_path = (dir / "global_plot.csv").string();
    write_text_file(result.plot_path, csv.str());
    return result;
}

std::vector<std::string> anova_statistics() {
    return {"rank", "probability", "correct", "length"};
}

AnovaCommandResult cmd_anova(const RunConfig& config, const std::string& dump_a,
                             const std::string& dump_b, const std::string& statistic) {
    config.validate();
    const auto valid = anova_statistics();
    if (std::find(valid.begin(), valid.end(), statistic) == valid.end()) {
        std::string names;
        for (const std::string& v : valid) names += (names.empty() ? "" : ", ") + v;
        throw ConfigError("unknown statistic '" + statistic + "'; choose one of " + names);
    }
    const fs::path dir = ensure_out_dir(config);

    auto column = [&](const std::string& path) {
        const std::vector<PrefixRecord> records = read_prefix_dump(path);
        if (records.empty()) throw DataError("'" + path + "' holds no prefixes");
        std::vector<double> values;
        values.reserve(records.size());
        for (const PrefixRecord& r : records) {
            if (statistic == "length") {
                values.push_back(static_cast<double>(r.prefix.length));
                continue;
            }
            if (!r.has_prediction) {
                throw DataError("'" + path +
                                "' has no prediction columns; run evaluate on it first");
            }
            if (statistic == "rank") {
                values.push_back(static_cast<double>(r.rank_of_actual));
            } else if (statistic == "probability") {
                values.push_back(r.probability);
            } else {
                values.push_back(r.correct ? 1.0 : 0.0);
            }
        }
        return values;
    };

    std::string name_a = file_stem(dump_a), name_b = file_stem(dump_b);
    if (name_a == name_b) {
        name_a += "_a";
        name_b += "_b";
    }

    AnovaCommandResult result;
    result.statistic = statistic;
    result.result = anova_one_way({column(dump_a), column(dump_b)}, {name_a, name_b});
    result.output_path = (dir / ("anova_" + statistic + ".json")).string();
    write_json_file(result.output_path, anova_json(result, config, {dump_a, dump_b}));
    return result;
}

AnovaCommandResult cmd_anova_summary(const RunConfig& config, const std::string& summary_path) {
    config.validate();
    const fs::path dir = ensure_out_dir(config);

    const json j = read_json_file(summary_path);
    const json groups_json = j.is_array() ? j : j.value("groups", json::array());
    if (!groups_json.is_array() || groups_json.empty()) {
        throw DataError("'" + summary_path +
                        "' must hold a \"groups\" array of {name,count,sum,mean,variance}");
    }
    std::vector<AnovaGroup> groups;
    for (const json& gj : groups_json) {
        try {
            AnovaGroup g;
            g.name = gj.value("name", "group" + std::to_string(groups.size() + 1));
            g.count = gj.at("count").get<std::int64_t>();
            g.sum = gj.at("sum").get<double>();
            g.mean = gj.contains("mean") ? gj.at("mean").get<double>()
                                         : g.sum / static_cast<double>(g.count);
            g.variance = gj.at("variance").get<double>();
            groups.push_back(std::move(g));
        } catch (const json::exception& e) {
            throw DataError("'" + summary_path + "': bad group record: " + e.what());
        }
    }

    AnovaCommandResult result;
    result.statistic = "summary";
    result.result = anova_from_summary(groups);
    result.output_path = (dir / "anova_summary.json").string();
    write_json_file(result.output_path, anova_json(result, config, {summary_path}));
    return result;
}

}  // namespace procattn
