// procattn: train, evaluate and explain attention-based next-activity
// predictors over business-process event logs.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numeric error.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "procattn/pipeline.hpp"

using namespace procattn;

namespace {

// --config is honoured before regular parsing so its values become the
// defaults that explicit flags then override.
RunConfig preload_config(int argc, char** argv) {
    std::string path;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--config" && i + 1 < argc) {
            path = argv[i + 1];
        } else if (arg.rfind("--config=", 0) == 0) {
            path = arg.substr(9);
        }
    }
    if (path.empty()) return RunConfig{};
    return RunConfig::from_json_file(path);
}

void add_data_options(CLI::App* cmd, RunConfig& config, std::string& profile_path,
                      std::string& time_unit_name) {
    cmd->add_option("--log", config.log_path,
                    "event log file (.csv/.xes), or a prefixes .ndjson dump");
    cmd->add_option("--profile", profile_path, "JSON column-mapping profile for the log");
    cmd->add_option("--min-length", config.min_prefix_length, "shortest prefix to keep");
    cmd->add_option("--max-length", config.max_prefix_length,
                    "longest prefix to keep (0 = no cap)");
    cmd->add_flag("--end-label", config.include_end_label,
                  "also emit full traces labelled with the end-of-case class");
    cmd->add_option("--time-unit", time_unit_name, "elapsed-time unit")
        ->check(CLI::IsMember({"milliseconds", "seconds", "minutes", "hours", "days"}));
    cmd->add_option("--scaler", config.scaler, "elapsed-time scaler")
        ->check(CLI::IsMember({"maxabs", "identity"}));
}

}  // namespace

int main(int argc, char** argv) {
    RunConfig config;
    try {
        config = preload_config(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }

    CLI::App app{"attention-based next-activity prediction over event logs"};
    app.set_version_flag("--version", std::string(kToolName) + " " + kToolVersion);
    std::string config_path;
    app.add_option("--config", config_path, "JSON run configuration (flags override it)");
    app.add_option("--seed", config.seed, "base random seed");
    app.add_option("--out-dir", config.out_dir, "directory for all output files");
    app.add_flag("--quiet", config.quiet, "suppress progress output");
    app.require_subcommand(1);

    std::string profile_path;
    std::string time_unit_name;
    std::string architecture_name;
    std::string selector_name = "predicted";

    CLI::App* prepare = app.add_subcommand(
        "prepare", "parse a log, build prefix traces, write dump + summary");
    prepare->fallthrough();
    add_data_options(prepare, config, profile_path, time_unit_name);

    CLI::App* train = app.add_subcommand(
        "train", "train one or more models and dump the held-out test prefixes");
    train->fallthrough();
    add_data_options(train, config, profile_path, time_unit_name);
    train->add_option("--architecture", architecture_name, "model architecture")
        ->check(CLI::IsMember({"shared", "specialised"}));
    train->add_option("--hidden", config.hidden_size, "LSTM hidden units per direction");
    train->add_option("--activity-dim", config.activity_embedding_dim,
                      "activity embedding width (0 = vocabulary size)");
    train->add_option("--resource-dim", config.resource_embedding_dim,
                      "resource embedding width (0 = vocabulary size)");
    train->add_option("--epochs", config.epochs, "training epochs");
    train->add_option("--batch", config.batch_size, "mini-batch size");
    train->add_option("--lr", config.lr, "learning rate");
    train->add_option("--patience", config.patience,
                      "epochs without validation improvement before stopping");
    train->add_option("--target-accuracy", config.target_accuracy,
                      "stop once validation accuracy reaches this (<0 = off)");
    train->add_option("--train-fraction", config.train_fraction,
                      "fraction of prefixes used for training");
    train->add_option("--repeats", config.repeats,
                      "number of runs under seeds seed, seed+1, ...");

    std::string artifact_path, prefixes_path;
    CLI::App* evaluate = app.add_subcommand(
        "evaluate", "score a model on a prefix dump; write predictions + metrics");
    evaluate->fallthrough();
    evaluate->add_option("--artifact", artifact_path, "trained model file")->required();
    evaluate->add_option("--prefixes", prefixes_path, "prefix dump (.ndjson)")->required();

    std::string decision_point, target;
    CLI::App* explain = app.add_subcommand(
        "explain", "extract local + global attention explanations at a decision point");
    explain->fallthrough();
    explain->add_option("--artifact", artifact_path, "trained model file")->required();
    explain->add_option("--prefixes", prefixes_path, "prefix dump (.ndjson)")->required();
    explain->add_option("--decision-point", decision_point,
                        "activity label the cohort's prefixes end with")
        ->required();
    explain->add_option("--target", target, "class label selecting the cohort")->required();
    explain->add_option("--selector", selector_name,
                        "cohort side: the model's prediction or the actual label")
        ->check(CLI::IsMember({"predicted", "actual"}));
    explain->add_option("--k", config.top_k, "events to rank per local explanation");
    explain->add_option("--window", config.window,
                        "alignment window (offsets -1..-window) for the global view");

    std::string dump_a, dump_b, statistic = "rank", summary_path;
    CLI::App* anova = app.add_subcommand(
        "anova", "one-way ANOVA between two prediction dumps, or from published summaries");
    anova->fallthrough();
    anova->add_option("--a", dump_a, "first prediction dump (.ndjson)");
    anova->add_option("--b", dump_b, "second prediction dump (.ndjson)");
    anova->add_option("--statistic", statistic, "per-prefix column to compare")
        ->check(CLI::IsMember(anova_statistics()));
    anova->add_option("--summary", summary_path,
                      "JSON file of group summaries {name,count,sum,mean,variance}");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (!profile_path.empty()) config.profile = LogProfile::from_json_file(profile_path);
        if (!time_unit_name.empty()) config.time_unit = time_unit_from_string(time_unit_name);
        if (!architecture_name.empty()) {
            config.architecture = architecture_from_string(architecture_name);
        }

        if (prepare->parsed()) {
            const PrepareResult r = cmd_prepare(config);
            if (!config.quiet) {
                std::cout << "prepared " << r.prefix_count << " prefixes from "
                          << r.summary.cases << " cases (" << r.summary.distinct_activities
                          << " activities, avg case length " << r.summary.avg_case_length
                          << ")\n";
                std::cout << "wrote " << r.prefixes_path << " and " << r.summary_path << "\n";
            }
        } else if (train->parsed()) {
            const TrainCommandResult r = cmd_train(config);
            if (!config.quiet) {
                std::cout << "split " << r.train_prefix_count << " train / "
                          << r.test_prefix_count << " test prefixes\n";
                for (const TrainRunOutput& run : r.runs) {
                    std::cout << "seed " << run.seed << ": best val accuracy "
                              << run.best_val_accuracy << " at epoch " << run.best_epoch
                              << " -> " << run.artifact_path << "\n";
                }
                std::cout << "test prefixes dumped to " << r.test_prefixes_path << "\n";
            }
        } else if (evaluate->parsed()) {
            const EvaluateResult r = cmd_evaluate(config, artifact_path, prefixes_path);
            if (!config.quiet) {
                std::cout << "accuracy " << r.report.accuracy << " over " << r.predicted_rows
                          << " prefixes (macro F1 " << r.report.macro_f1 << ")\n";
                std::cout << "wrote " << r.predictions_path << ", " << r.metrics_path
                          << ", " << r.confusion_path << "\n";
            }
        } else if (explain->parsed()) {
            const ExplainResult r =
                cmd_explain(config, artifact_path, prefixes_path, decision_point, target,
                            selector_from_string(selector_name), config.top_k, config.window);
            if (!config.quiet) {
                std::cout << "cohort of " << r.global.cohort_size << " prefixes ending at '"
                          << decision_point << "' with " << selector_name << " label '"
                          << target << "'\n";
                std::cout << "wrote " << r.local_path << ", " << r.global_path << ", "
                          << r.plot_path << "\n";
            }
        } else if (anova->parsed()) {
            AnovaCommandResult r;
            if (!summary_path.empty()) {
                if (!dump_a.empty() || !dump_b.empty()) {
                    throw ConfigError("--summary cannot be combined with --a/--b");
                }
                r = cmd_anova_summary(config, summary_path);
            } else {
                if (dump_a.empty() || dump_b.empty()) {
                    throw ConfigError("anova needs either --summary or both --a and --b");
                }
                r = cmd_anova(config, dump_a, dump_b, statistic);
            }
            if (!config.quiet) {
                std::cout << "F(" << r.result.df_between << ", " << r.result.df_within
                          << ") = " << r.result.f << ", p = " << r.result.p_value << "\n";
                std::cout << "wrote " << r.output_path << "\n";
            }
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
