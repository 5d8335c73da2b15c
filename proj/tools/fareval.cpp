// Command-line front end for the fair-ranking evaluation pipeline.

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "fareval/commands.hpp"

namespace {

// Options parse on top of the config-file values, so explicitly-passed flags
// win without any merge bookkeeping.
void add_common_options(CLI::App* cmd, fareval::JobConfig& cfg, int& verbosity, bool& json_log) {
    cmd->add_option("--config", "JSON config file; flags override its values");  // consumed in main
    cmd->add_option("--task", cfg.task, "task selector (1 or 2)")->check(CLI::Range(1, 2));
    cmd->add_option("--registry", cfg.registry, "dimension registry JSON");
    cmd->add_option("--pages", cfg.pages, "page metadata JSONL (optionally gzipped)");
    cmd->add_option("--qrels", cfg.qrels, "qrels file");
    cmd->add_option("--alignments", cfg.alignments, "alignment cache file");
    cmd->add_option("--targets", cfg.targets, "target table directory");
    cmd->add_option("--runs", cfg.runs, "run submission file");
    cmd->add_option("--out", cfg.out, "output directory (or file for report)");
    cmd->add_option("--topics", cfg.topics, "topics JSONL");
    cmd->add_option("--seed", cfg.seed, "random seed");
    cmd->add_option("--resamples", cfg.resamples, "bootstrap resamples");
    cmd->add_option("--unknown-mode", cfg.unknown_mode, "group|ignore")
        ->check(CLI::IsMember({"group", "ignore"}));
    cmd->add_option("--ee-l", cfg.ee_l, "squared|norm")->check(CLI::IsMember({"squared", "norm"}));
    cmd->add_option("--subset", cfg.subsets, "NAME=dim1,dim2,... (repeatable)");
    cmd->add_flag("--csv-escape", cfg.csv_escape, "also write alignment tables as CSV");
    cmd->add_option("--task1-len", cfg.task1_length, "task 1 ranking length limit");
    cmd->add_option("--task2-len", cfg.task2_length, "task 2 ranking length limit");
    cmd->add_option("--task2-rankings", cfg.task2_rankings, "task 2 rankings per topic");
    cmd->add_option("--synth-pages", cfg.synth_pages, "synthetic corpus size");
    cmd->add_option("--synth-topics", cfg.synth_topics, "synthetic topic count");
    cmd->add_option("--synth-rel-min", cfg.synth_rel_min, "min relevant set size");
    cmd->add_option("--synth-rel-max", cfg.synth_rel_max, "max relevant set size");
    cmd->add_flag_function(
        "-q,--quiet", [&verbosity](std::int64_t) { verbosity = 0; }, "errors only");
    cmd->add_flag_function(
        "-v,--verbose", [&verbosity](std::int64_t) { verbosity = 2; }, "debug output");
    cmd->add_flag("--log-json", json_log, "machine-readable JSON log lines on stderr");
}

// The config file has to be known before CLI11 fills in flag values, so it is
// located with a pre-scan of argv.
std::string find_config_path(int argc, char** argv) {
    for (int i = 1; i < argc - 1; ++i)
        if (std::string(argv[i]) == "--config") return argv[i + 1];
    for (int i = 1; i < argc; ++i) {
        std::string arg = argv[i];
        if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
    }
    return {};
}

}  // namespace

int main(int argc, char** argv) {
    fareval::Logger log;
    fareval::JobConfig cfg;
    try {
        std::string config_path = find_config_path(argc, argv);
        if (!config_path.empty()) cfg = fareval::JobConfig::load(config_path);
    } catch (const std::exception& e) {
        log.emit("error", e.what());
        return 2;
    }

    CLI::App app{"fair-ranking evaluation toolkit"};
    app.require_subcommand(1);

    int verbosity = 1;
    bool json_log = false;
    std::map<std::string, int (*)(const fareval::JobConfig&, fareval::Logger&)> handlers = {
        {"synth", fareval::cmd_synth},
        {"build-alignments", fareval::cmd_build_alignments},
        {"build-targets", fareval::cmd_build_targets},
        {"evaluate", fareval::cmd_evaluate},
        {"report", fareval::cmd_report},
    };
    const std::map<std::string, std::string> descriptions = {
        {"synth", "generate a deterministic synthetic corpus, qrels and runs"},
        {"build-alignments", "build the page alignment cache from metadata"},
        {"build-targets", "compute per-topic fairness targets"},
        {"evaluate", "score a run against targets"},
        {"report", "combine evaluation reports into one table"},
    };
    for (const auto& [name, handler] : handlers) {
        auto* cmd = app.add_subcommand(name, descriptions.at(name));
        add_common_options(cmd, cfg, verbosity, json_log);
        if (name == "report")
            cmd->add_option("--inputs", cfg.report_inputs, "report.json files to combine");
    }

    CLI11_PARSE(app, argc, argv);

    std::string name = app.get_subcommands().front()->get_name();
    log.verbosity = verbosity;
    log.json = json_log;
    try {
        return handlers.at(name)(cfg, log);
    } catch (const fareval::MissingInput& e) {
        log.emit("error", e.what());
        return 2;
    } catch (const fareval::InternalError& e) {
        log.emit("error", std::string("internal invariant violation: ") + e.what());
        return 3;
    } catch (const std::exception& e) {
        log.emit("error", e.what());
        return 1;
    }
}
