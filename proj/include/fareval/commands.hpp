#pragma once

// Pipeline commands behind the CLI subcommands: synth, build-alignments,
// build-targets, evaluate, report. All outputs are deterministic for fixed
// inputs and seed.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareval/alignment.hpp"
#include "fareval/core.hpp"
#include "fareval/errors.hpp"
#include "fareval/io_util.hpp"
#include "fareval/metrics.hpp"
#include "fareval/run_io.hpp"
#include "fareval/synth.hpp"
#include "fareval/targets.hpp"

namespace fareval {

struct Logger {
    int verbosity = 1;  // 0 quiet, 1 normal, 2 verbose
    bool json = false;
    std::size_t warning_count = 0;

    void emit(const char* level, const std::string& msg) {
        if (json) {
            nlohmann::json j;
            j["level"] = level;
            j["msg"] = msg;
            std::cerr << j.dump() << '\n';
        } else {
            std::cerr << level << ": " << msg << '\n';
        }
    }
    void info(const std::string& msg) {
        if (verbosity >= 1) emit("info", msg);
    }
    void debug(const std::string& msg) {
        if (verbosity >= 2) emit("debug", msg);
    }
    void warn(const std::string& msg) {
        ++warning_count;
        if (verbosity >= 1) emit("warning", msg);
    }
};

// ---------------------------------------------------------------------------
// Job configuration (file + flag overrides; flags win)

struct JobConfig {
    int task = 1;
    std::string registry;
    std::string pages;
    std::string qrels;
    std::string alignments;
    std::string targets;  // directory of target tables
    std::string runs;
    std::string out;
    std::string topics;
    std::vector<std::string> report_inputs;

    std::uint64_t seed = 42;
    std::size_t resamples = 10000;
    std::string unknown_mode = "group";  // group | ignore
    std::string ee_l = "squared";        // squared | norm
    std::vector<std::string> subsets;    // NAME=dim1,dim2,...
    bool csv_escape = false;

    std::size_t task1_length = 500;
    std::size_t task2_length = 20;
    std::size_t task2_rankings = 100;

    std::size_t synth_pages = 2000;
    std::size_t synth_topics = 50;
    std::size_t synth_rel_min = 30;
    std::size_t synth_rel_max = 80;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["task"] = task;
        j["registry"] = registry;
        j["pages"] = pages;
        j["qrels"] = qrels;
        j["alignments"] = alignments;
        j["targets"] = targets;
        j["runs"] = runs;
        j["out"] = out;
        j["topics"] = topics;
        j["report_inputs"] = report_inputs;
        j["seed"] = seed;
        j["resamples"] = resamples;
        j["unknown_mode"] = unknown_mode;
        j["ee_l"] = ee_l;
        j["subsets"] = subsets;
        j["csv_escape"] = csv_escape;
        j["task1_length"] = task1_length;
        j["task2_length"] = task2_length;
        j["task2_rankings"] = task2_rankings;
        j["synth_pages"] = synth_pages;
        j["synth_topics"] = synth_topics;
        j["synth_rel_min"] = synth_rel_min;
        j["synth_rel_max"] = synth_rel_max;
        return j;
    }

    static JobConfig from_json(const nlohmann::json& j) {
        JobConfig c;
        c.task = j.value("task", c.task);
        c.registry = j.value("registry", c.registry);
        c.pages = j.value("pages", c.pages);
        c.qrels = j.value("qrels", c.qrels);
        c.alignments = j.value("alignments", c.alignments);
        c.targets = j.value("targets", c.targets);
        c.runs = j.value("runs", c.runs);
        c.out = j.value("out", c.out);
        c.topics = j.value("topics", c.topics);
        c.report_inputs = j.value("report_inputs", c.report_inputs);
        c.seed = j.value("seed", c.seed);
        c.resamples = j.value("resamples", c.resamples);
        c.unknown_mode = j.value("unknown_mode", c.unknown_mode);
        c.ee_l = j.value("ee_l", c.ee_l);
        c.subsets = j.value("subsets", c.subsets);
        c.csv_escape = j.value("csv_escape", c.csv_escape);
        c.task1_length = j.value("task1_length", c.task1_length);
        c.task2_length = j.value("task2_length", c.task2_length);
        c.task2_rankings = j.value("task2_rankings", c.task2_rankings);
        c.synth_pages = j.value("synth_pages", c.synth_pages);
        c.synth_topics = j.value("synth_topics", c.synth_topics);
        c.synth_rel_min = j.value("synth_rel_min", c.synth_rel_min);
        c.synth_rel_max = j.value("synth_rel_max", c.synth_rel_max);
        return c;
    }

    static JobConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw MissingInput("cannot open config " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ": invalid JSON: " + e.what());
        }
        return from_json(j);
    }

    EvalConfig eval_config(const GroupSpace& space) const {
        EvalConfig ec;
        if (unknown_mode == "group")
            ec.unknown_mode = UnknownMode::Group;
        else if (unknown_mode == "ignore")
            ec.unknown_mode = UnknownMode::Ignore;
        else
            throw ConfigError("unknown_mode must be 'group' or 'ignore'");
        if (ee_l == "squared")
            ec.ee_l_squared = true;
        else if (ee_l == "norm")
            ec.ee_l_squared = false;
        else
            throw ConfigError("ee_l must be 'squared' or 'norm'");
        ec.bootstrap_seed = seed;
        ec.bootstrap_resamples = resamples;
        for (const auto& s : subsets) {
            auto eq = s.find('=');
            if (eq == std::string::npos) throw ConfigError("subset spec must be NAME=dim1,dim2,...: " + s);
            std::string name = s.substr(0, eq);
            std::vector<std::string> dims;
            for (auto part : split_on(s.substr(eq + 1), ','))
                if (!part.empty()) dims.emplace_back(part);
            if (name.empty() || dims.empty()) throw ConfigError("bad subset spec: " + s);
            for (const auto& d : dims)
                if (!space.dim_index(d)) throw ConfigError("subset '" + name + "': unknown dimension '" + d + "'");
            ec.subsets.emplace_back(name, dims);
        }
        return ec;
    }

    TaskLimits limits() const { return TaskLimits{task1_length, task2_length, task2_rankings}; }
};

// ---------------------------------------------------------------------------
// Target table files

namespace detail {

inline std::string dim_target_name(int task, const std::string& dim) {
    return "task" + std::to_string(task) + "-" + dim + "-target.csv";
}
inline std::string int_target_name(int task) {
    return "task" + std::to_string(task) + "-int-target.tsv";
}
inline std::string subset_target_name(int task, const std::string& name) {
    return "task" + std::to_string(task) + "-subset-" + name + "-target.tsv";
}

inline void write_dim_targets(const std::string& path, const DimensionSpec& dim,
                              const std::map<std::int64_t, Distribution>& targets) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << "topic_id";
    for (const auto& l : dim.labels) out << ',' << l;
    out << '\n';
    for (const auto& [topic, dist] : targets) {
        out << topic;
        std::vector<double> dense(dim.size(), 0.0);
        for (const auto& [key, v] : dist.cells) dense[key] = v;
        for (double v : dense) out << ',' << format_double(v);
        out << '\n';
    }
}

inline std::map<std::int64_t, Distribution> read_dim_targets(const std::string& path,
                                                             const DimensionSpec& dim) {
    std::map<std::int64_t, Distribution> targets;
    LineReader reader(path);
    std::string line;
    if (!reader.next(line)) throw ParseError(path, 1, "missing header");
    auto header = split_on(line, ',');
    if (header.size() != dim.size() + 1)
        throw ParseError(path, 1, "target table does not match dimension '" + dim.name + "'");
    for (std::size_t i = 0; i < dim.size(); ++i)
        if (header[i + 1] != dim.labels[i])
            throw ParseError(path, 1, "label mismatch at column " + std::to_string(i + 1));
    while (reader.next(line)) {
        if (line.empty()) continue;
        auto cols = split_on(line, ',');
        if (cols.size() != dim.size() + 1)
            throw ParseError(path, reader.line_number(), "wrong column count");
        std::int64_t topic;
        if (!parse_int64(cols[0], topic)) throw ParseError(path, reader.line_number(), "bad topic id");
        Distribution d;
        d.cardinality = dim.size();
        for (std::size_t i = 0; i < dim.size(); ++i) {
            char* end = nullptr;
            std::string s(cols[i + 1]);
            double v = std::strtod(s.c_str(), &end);
            if (end != s.c_str() + s.size()) throw ParseError(path, reader.line_number(), "bad weight");
            if (v != 0.0) d.cells.emplace_back(i, v);
        }
        targets[topic] = std::move(d);
    }
    return targets;
}

inline void write_sparse_targets(const std::string& path,
                                 const std::map<std::int64_t, Distribution>& targets) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << "topic_id\tindex\tweight\n";
    for (const auto& [topic, dist] : targets)
        for (const auto& [key, v] : dist.cells)
            out << topic << '\t' << key << '\t' << format_double(v) << '\n';
}

inline std::map<std::int64_t, Distribution> read_sparse_targets(const std::string& path,
                                                                std::uint64_t cardinality) {
    std::map<std::int64_t, Distribution> targets;
    LineReader reader(path);
    std::string line;
    if (!reader.next(line)) throw ParseError(path, 1, "missing header");
    while (reader.next(line)) {
        if (line.empty()) continue;
        auto cols = split_on(line, '\t');
        if (cols.size() != 3) throw ParseError(path, reader.line_number(), "expected 3 columns");
        std::int64_t topic, key;
        if (!parse_int64(cols[0], topic) || !parse_int64(cols[1], key))
            throw ParseError(path, reader.line_number(), "bad integer field");
        char* end = nullptr;
        std::string s(cols[2]);
        double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size()) throw ParseError(path, reader.line_number(), "bad weight");
        if (key < 0 || static_cast<std::uint64_t>(key) >= cardinality)
            throw ParseError(path, reader.line_number(), "group index out of range");
        auto& d = targets[topic];
        d.cardinality = cardinality;
        d.cells.emplace_back(static_cast<std::uint64_t>(key), v);
    }
    for (auto& [topic, d] : targets) std::sort(d.cells.begin(), d.cells.end());
    return targets;
}

inline std::uint64_t subset_cardinality(const GroupSpace& space, const std::vector<std::string>& dims) {
    std::uint64_t card = 1;
    for (const auto& name : dims) {
        auto d = space.dim_index(name);
        if (!d) throw ConfigError("unknown dimension '" + name + "'");
        card *= space.dims[*d].size();
    }
    return card;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Report files

namespace detail {

inline void write_report_json(const MetricReport& report, const std::string& path) {
    nlohmann::json j;
    j["task"] = report.task;
    j["run"] = report.run_name;
    j["aggregate"] = report.aggregate;
    nlohmann::json ci = nlohmann::json::object();
    for (const auto& [metric, interval] : report.intervals)
        ci[metric] = {interval.first, interval.second};
    j["ci"] = std::move(ci);
    nlohmann::json topics = nlohmann::json::array();
    for (const auto& t : report.topics) {
        nlohmann::json jt;
        jt["topic_id"] = t.topic_id;
        jt["values"] = t.values;
        topics.push_back(std::move(jt));
    }
    j["topics"] = std::move(topics);
    j["diagnostics"] = report.diagnostics;
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

inline double aggregate_or_zero(const MetricReport& r, const std::string& key) {
    auto it = r.aggregate.find(key);
    return it == r.aggregate.end() ? 0.0 : it->second;
}

// One aggregate row with the columns of the paper's main tables.
inline void write_report_csv(const MetricReport& report, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    if (report.task == 1) {
        out << "run,nDCG,AWRF,Score,CI_lo,CI_hi\n";
        auto ci = report.intervals.count("M1") ? report.intervals.at("M1") : std::make_pair(0.0, 0.0);
        out << report.run_name << ',' << format_double(aggregate_or_zero(report, "nDCG")) << ','
            << format_double(aggregate_or_zero(report, "AWRF")) << ','
            << format_double(aggregate_or_zero(report, "M1")) << ',' << format_double(ci.first) << ','
            << format_double(ci.second) << '\n';
    } else {
        out << "run,EE-R,EE-D,EE-L,CI_lo,CI_hi\n";
        auto ci = report.intervals.count("EE-L") ? report.intervals.at("EE-L") : std::make_pair(0.0, 0.0);
        out << report.run_name << ',' << format_double(aggregate_or_zero(report, "EE-R")) << ','
            << format_double(aggregate_or_zero(report, "EE-D")) << ','
            << format_double(aggregate_or_zero(report, "EE-L")) << ',' << format_double(ci.first) << ','
            << format_double(ci.second) << '\n';
    }
}

// Per-dimension / per-subset breakdown row (Score on each space).
inline void write_report_dims_csv(const MetricReport& report, const std::string& path) {
    std::string metric = report.task == 1 ? "M1" : "EE-L";
    std::vector<std::string> spaces;
    for (const auto& [k, v] : report.aggregate)
        if (k.rfind(metric + ":", 0) == 0) spaces.push_back(k.substr(metric.size() + 1));
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << "run,Overall";
    for (const auto& s : spaces) out << ',' << s;
    out << '\n';
    out << report.run_name << ',' << format_double(aggregate_or_zero(report, metric));
    for (const auto& s : spaces) out << ',' << format_double(aggregate_or_zero(report, metric + ":" + s));
    out << '\n';
}

inline void write_topics_csv(const MetricReport& report, const std::string& path) {
    std::set<std::string> columns;
    for (const auto& t : report.topics)
        for (const auto& [k, v] : t.values) columns.insert(k);
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << "topic_id";
    for (const auto& c : columns) out << ',' << c;
    out << '\n';
    for (const auto& t : report.topics) {
        out << t.topic_id;
        for (const auto& c : columns) {
            auto it = t.values.find(c);
            out << ',';
            if (it != t.values.end()) out << format_double(it->second);
        }
        out << '\n';
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline int cmd_synth(const JobConfig& cfg, Logger& log) {
    if (cfg.out.empty()) throw MissingInput("synth: --out directory required");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out);
    fs::create_directories(fs::path(cfg.out) / "runs");

    SynthSpec spec;
    spec.seed = cfg.seed;
    spec.page_count = cfg.synth_pages;
    spec.topic_count = cfg.synth_topics;
    spec.rel_min = cfg.synth_rel_min;
    spec.rel_max = cfg.synth_rel_max;
    spec.task1_length = cfg.task1_length;
    spec.task2_length = cfg.task2_length;
    spec.task2_rankings = cfg.task2_rankings;

    SynthCorpus corpus = gen_corpus(spec);
    auto outp = [&](const std::string& name) { return (fs::path(cfg.out) / name).string(); };
    write_registry_json(corpus.registry, outp("registry.json"));
    write_corpus_jsonl(corpus, outp("pages.jsonl"));
    write_topics_jsonl(corpus, outp("topics.jsonl"));
    serialize_qrels(corpus.qrels, outp("qrels.tsv"));
    {
        std::ofstream q(outp("quality.csv"), std::ios::trunc | std::ios::binary);
        q << "page_id,quality\n";
        std::vector<const PageRecord*> sorted;
        for (const auto& p : corpus.pages) sorted.push_back(&p);
        std::sort(sorted.begin(), sorted.end(),
                  [](const PageRecord* a, const PageRecord* b) { return a->page_id < b->page_id; });
        for (const auto* p : sorted) q << p->page_id << ',' << p->quality << '\n';
    }

    // align the generated corpus to derive the generator runs
    AlignmentBuilder builder(corpus.registry);
    for (const auto& rec : corpus.pages) builder.add(rec);
    AlignmentTable align = builder.finish();

    std::mt19937_64 run_rng(spec.seed ^ 0x9e3779b97f4a7c15ull);
    auto make_run = [](int task, const char* name) {
        RunData run;
        run.task = task;
        run.source_path = name;
        return run;
    };
    RunData t1_ideal = make_run(1, "task1-ideal");
    RunData t1_rev = make_run(1, "task1-reversed");
    RunData t1_rand = make_run(1, "task1-random");
    RunData t2_ideal = make_run(2, "task2-ideal");
    RunData t2_rev = make_run(2, "task2-reversed");
    RunData t2_rand = make_run(2, "task2-random");
    RunData t2_replay = make_run(2, "task2-replay");

    for (const auto& q : corpus.qrels) {
        ResolvedTopic topic = resolve_topic(align, q);
        Task2Topic t2 = prepare_task2_topic(align, topic);

        Ranking ideal = gen_ideal_ranking(align, t2, align.pages(), spec.task1_length);
        Ranking reversed = ideal;
        std::reverse(reversed.pages.begin(), reversed.pages.end());
        t1_ideal.task1.push_back(ideal);
        t1_rev.task1.push_back(reversed);
        t1_rand.task1.push_back(gen_random_ranking(align, q.topic_id, spec.task1_length, run_rng));

        auto truncate = [&](RankingSequence seq) {
            for (auto& r : seq.rankings)
                if (r.pages.size() > spec.task2_length) r.pages.resize(spec.task2_length);
            return seq;
        };
        t2_ideal.task2.push_back(truncate(gen_ideal_sequence(align, t2, spec.task2_rankings)));
        t2_rev.task2.push_back(truncate(gen_ideal_sequence(align, t2, spec.task2_rankings, true)));
        RankingSequence rnd;
        rnd.topic_id = q.topic_id;
        for (std::size_t i = 0; i < spec.task2_rankings; ++i)
            rnd.rankings.push_back(gen_random_ranking(align, q.topic_id, spec.task2_length, run_rng));
        t2_rand.task2.push_back(std::move(rnd));
        // full-length replay of the ideal policy (exposure-matching fixture)
        t2_replay.task2.push_back(gen_ideal_sequence(align, t2, spec.task2_rankings));
    }

    auto runp = [&](const std::string& name) { return (fs::path(cfg.out) / "runs" / name).string(); };
    serialize_run(t1_ideal, runp("task1-ideal.tsv"));
    serialize_run(t1_rev, runp("task1-reversed.tsv"));
    serialize_run(t1_rand, runp("task1-random.tsv"));
    serialize_run(t2_ideal, runp("task2-ideal.tsv"));
    serialize_run(t2_rev, runp("task2-reversed.tsv"));
    serialize_run(t2_rand, runp("task2-random.tsv"));
    serialize_run(t2_replay, runp("task2-replay.tsv"));

    {
        nlohmann::json manifest;
        manifest["seed"] = spec.seed;
        manifest["pages"] = spec.page_count;
        manifest["topics"] = spec.topic_count;
        manifest["cardinality"] = corpus.registry.cardinality();
        std::ofstream out(outp("synth-manifest.json"), std::ios::trunc | std::ios::binary);
        out << manifest.dump(2) << '\n';
    }
    log.info("synthesized " + std::to_string(spec.page_count) + " pages, " +
             std::to_string(spec.topic_count) + " topics into " + cfg.out);
    return 0;
}

inline int cmd_build_alignments(const JobConfig& cfg, Logger& log) {
    if (cfg.registry.empty()) throw MissingInput("build-alignments: --registry required");
    if (cfg.pages.empty()) throw MissingInput("build-alignments: --pages required");
    if (cfg.out.empty()) throw MissingInput("build-alignments: --out required");
    require_file(cfg.registry, "registry");
    require_file(cfg.pages, "page metadata");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out);

    GroupSpace registry = load_registry(cfg.registry);
    BuildStats stats;
    AlignmentTable align = build_alignment_from_file(cfg.pages, registry, &stats);
    align.save((fs::path(cfg.out) / "alignments.bin").string());
    if (cfg.csv_escape) align.save_csv((fs::path(cfg.out) / "align-csv").string());

    {
        std::ofstream q((fs::path(cfg.out) / "quality.csv").string(), std::ios::trunc | std::ios::binary);
        q << "page_id,quality\n";
        for (std::size_t r = 0; r < align.page_count(); ++r)
            if (auto rank = align.work_rank(r))
                q << align.pages()[r] << ',' << kQualityLevels[static_cast<std::size_t>(*rank)] << '\n';
    }

    nlohmann::json summary;
    summary["lines"] = stats.lines;
    summary["pages"] = stats.pages;
    summary["duplicate_pages"] = stats.duplicate_pages;
    summary["malformed_lines"] = stats.malformed_lines;
    summary["rejected_records"] = stats.rejected_records;
    nlohmann::json unknown = nlohmann::json::object();
    for (std::size_t d = 0; d < registry.dims.size(); ++d)
        if (registry.dims[d].has_unknown()) unknown[registry.dims[d].name] = align.unknown_rate(d);
    summary["unknown_rates"] = std::move(unknown);
    summary["sample_errors"] = stats.sample_errors;
    std::ofstream out((fs::path(cfg.out) / "alignment-summary.json").string(),
                      std::ios::trunc | std::ios::binary);
    out << summary.dump(2) << '\n';

    if (stats.rejected_records) log.warn(std::to_string(stats.rejected_records) + " records rejected");
    if (stats.malformed_lines) log.warn(std::to_string(stats.malformed_lines) + " malformed lines skipped");
    log.info("aligned " + std::to_string(stats.pages) + " pages");
    return 0;
}

inline int cmd_build_targets(const JobConfig& cfg, Logger& log) {
    if (cfg.alignments.empty()) throw MissingInput("build-targets: --alignments required");
    if (cfg.qrels.empty()) throw MissingInput("build-targets: --qrels required");
    if (cfg.out.empty()) throw MissingInput("build-targets: --out required");
    require_file(cfg.alignments, "alignment cache");
    require_file(cfg.qrels, "qrels");
    namespace fs = std::filesystem;
    fs::create_directories(cfg.out);

    AlignmentTable align = AlignmentTable::load(cfg.alignments);
    const GroupSpace& space = align.space();
    EvalConfig ec = cfg.eval_config(space);
    std::vector<std::string> warnings;
    std::vector<Qrels> qrels = parse_qrels(cfg.qrels, &warnings);
    for (const auto& w : warnings) log.warn(w);

    const int task = cfg.task;
    auto all = detail::all_dims(space);
    std::map<std::string, std::map<std::int64_t, Distribution>> dim_targets;
    std::map<std::int64_t, Distribution> int_targets;
    std::map<std::string, std::map<std::int64_t, Distribution>> subset_targets;
    std::vector<std::array<std::string, 4>> work_rows;  // topic, level, count, exposure
    std::size_t skipped = 0;

    for (const auto& q : qrels) {
        ResolvedTopic topic = resolve_topic(align, q);
        if (!topic.missing.empty())
            log.warn("topic " + std::to_string(q.topic_id) + ": " + std::to_string(topic.missing.size()) +
                     " relevant pages not in the alignment table, dropped");
        try {
            if (task == 1) {
                for (std::size_t d = 0; d < space.dims.size(); ++d)
                    dim_targets[space.dims[d].name][q.topic_id] = task1_dim_target(topic, align, d);
                int_targets[q.topic_id] = task1_intersectional_target(topic, align, all);
                for (const auto& [name, dim_names] : ec.subsets) {
                    auto dims = detail::dims_for_space(space, name, ec);
                    subset_targets[name][q.topic_id] = task1_intersectional_target(topic, align, dims);
                }
            } else {
                Task2Topic t2 = prepare_task2_topic(align, topic);
                if (!t2.dropped_missing_quality.empty())
                    log.warn("topic " + std::to_string(q.topic_id) + ": " +
                             std::to_string(t2.dropped_missing_quality.size()) +
                             " pages lack quality labels, dropped");
                for (std::size_t d = 0; d < space.dims.size(); ++d)
                    dim_targets[space.dims[d].name][q.topic_id] = task2_dim_target(t2, align, d);
                int_targets[q.topic_id] = task2_intersectional_target(t2, align, all);
                for (const auto& [name, dim_names] : ec.subsets) {
                    auto dims = detail::dims_for_space(space, name, ec);
                    subset_targets[name][q.topic_id] = task2_intersectional_target(t2, align, dims);
                }
                for (std::size_t l = 0; l < t2.profile.levels.size(); ++l)
                    work_rows.push_back({std::to_string(q.topic_id), t2.profile.levels[l],
                                         std::to_string(t2.profile.counts[l]),
                                         t2.profile.counts[l] ? format_double(t2.profile.exposures[l])
                                                              : std::string()});
            }
        } catch (const DegenerateTarget& e) {
            ++skipped;
            log.warn(std::string("degenerate topic skipped: ") + e.what());
        }
    }

    auto outp = [&](const std::string& name) { return (fs::path(cfg.out) / name).string(); };
    for (std::size_t d = 0; d < space.dims.size(); ++d)
        detail::write_dim_targets(outp(detail::dim_target_name(task, space.dims[d].name)), space.dims[d],
                                  dim_targets[space.dims[d].name]);
    detail::write_sparse_targets(outp(detail::int_target_name(task)), int_targets);
    for (const auto& [name, targets] : subset_targets)
        detail::write_sparse_targets(outp(detail::subset_target_name(task, name)), targets);
    if (task == 2) {
        std::ofstream out(outp("task2-work-exposure.csv"), std::ios::trunc | std::ios::binary);
        out << "topic_id,level,count,exposure\n";
        for (const auto& row : work_rows)
            out << row[0] << ',' << row[1] << ',' << row[2] << ',' << row[3] << '\n';
    }
    log.info("built targets for " + std::to_string(int_targets.size()) + " topics (" +
             std::to_string(skipped) + " skipped)");
    return 0;
}

inline int cmd_evaluate(const JobConfig& cfg, Logger& log) {
    if (cfg.alignments.empty()) throw MissingInput("evaluate: --alignments required");
    if (cfg.qrels.empty()) throw MissingInput("evaluate: --qrels required");
    if (cfg.targets.empty()) throw MissingInput("evaluate: --targets required");
    if (cfg.runs.empty()) throw MissingInput("evaluate: --runs required");
    if (cfg.out.empty()) throw MissingInput("evaluate: --out required");
    require_file(cfg.alignments, "alignment cache");
    require_file(cfg.qrels, "qrels");
    require_file(cfg.runs, "run file");
    namespace fs = std::filesystem;
    if (!fs::is_directory(cfg.targets)) throw MissingInput("targets directory not found: " + cfg.targets);
    fs::create_directories(cfg.out);

    AlignmentTable align = AlignmentTable::load(cfg.alignments);
    const GroupSpace& space = align.space();
    EvalConfig ec = cfg.eval_config(space);
    std::vector<std::string> warnings;
    std::vector<Qrels> qrels = parse_qrels(cfg.qrels, &warnings);
    for (const auto& w : warnings) log.warn(w);
    RunData run = parse_run(cfg.runs, cfg.task, cfg.limits());
    run.source_path = fs::path(cfg.runs).stem().string();

    // assemble per-topic targets from the files build-targets wrote
    const int task = cfg.task;
    auto tp = [&](const std::string& name) { return (fs::path(cfg.targets) / name).string(); };
    std::map<std::int64_t, TopicTargets> by_topic;
    {
        auto ints = detail::read_sparse_targets(tp(detail::int_target_name(task)), space.cardinality());
        for (auto& [topic, dist] : ints) {
            by_topic[topic].topic_id = topic;
            by_topic[topic].spaces[""] = std::move(dist);
        }
        for (const auto& dim : space.dims) {
            std::string path = tp(detail::dim_target_name(task, dim.name));
            if (!fs::exists(path)) {
                log.warn("no target table for dimension '" + dim.name + "', skipped");
                continue;
            }
            for (auto& [topic, dist] : detail::read_dim_targets(path, dim))
                by_topic[topic].spaces[dim.name] = std::move(dist);
        }
        for (const auto& [name, dim_names] : ec.subsets) {
            std::string path = tp(detail::subset_target_name(task, name));
            if (!fs::exists(path)) {
                log.warn("no target table for subset '" + name + "', skipped");
                continue;
            }
            auto card = detail::subset_cardinality(space, dim_names);
            for (auto& [topic, dist] : detail::read_sparse_targets(path, card))
                by_topic[topic].spaces[name] = std::move(dist);
        }
    }
    std::vector<TopicTargets> targets;
    for (auto& [topic, t] : by_topic) targets.push_back(std::move(t));

    MetricReport report = task == 1 ? evaluate_task1(run, qrels, align, targets, ec)
                                    : evaluate_task2(run, qrels, align, targets, ec);
    auto outp = [&](const std::string& name) { return (fs::path(cfg.out) / name).string(); };
    detail::write_report_json(report, outp("report.json"));
    detail::write_report_csv(report, outp("report.csv"));
    detail::write_report_dims_csv(report, outp("report-dims.csv"));
    detail::write_topics_csv(report, outp("topics.csv"));
    for (const auto& d : report.diagnostics) log.warn(d);
    log.info("scored " + std::to_string(report.topics.size()) + " topics; " +
             std::to_string(report.diagnostics.size()) + " warnings");
    return 0;
}

inline int cmd_report(const JobConfig& cfg, Logger& log) {
    if (cfg.report_inputs.empty()) throw MissingInput("report: at least one report.json input required");
    if (cfg.out.empty()) throw MissingInput("report: --out required");
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(cfg.out).parent_path().empty() ? "." : fs::path(cfg.out).parent_path().string());

    struct Row {
        std::string run;
        int task;
        double a = 0, b = 0, score = 0, lo = 0, hi = 0;
    };
    std::vector<Row> rows;
    int task = 0;
    for (const auto& path : cfg.report_inputs) {
        require_file(path, "report");
        std::ifstream in(path);
        nlohmann::json j;
        in >> j;
        Row r;
        r.task = j.value("task", 1);
        if (task == 0) task = r.task;
        if (task != r.task) throw ConfigError("cannot combine reports from different tasks");
        r.run = j.value("run", path);
        auto agg = j.value("aggregate", nlohmann::json::object());
        if (r.task == 1) {
            r.a = agg.value("nDCG", 0.0);
            r.b = agg.value("AWRF", 0.0);
            r.score = agg.value("M1", 0.0);
        } else {
            r.a = agg.value("EE-R", 0.0);
            r.b = agg.value("EE-D", 0.0);
            r.score = agg.value("EE-L", 0.0);
        }
        auto ci = j.value("ci", nlohmann::json::object());
        std::string key = r.task == 1 ? "M1" : "EE-L";
        if (ci.contains(key)) {
            r.lo = ci[key][0].get<double>();
            r.hi = ci[key][1].get<double>();
        }
        rows.push_back(std::move(r));
    }
    // higher M1 first; lower EE-L first
    std::sort(rows.begin(), rows.end(), [&](const Row& x, const Row& y) {
        if (x.score != y.score) return task == 1 ? x.score > y.score : x.score < y.score;
        return x.run < y.run;
    });
    std::ofstream out(cfg.out, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + cfg.out);
    out << (task == 1 ? "run,nDCG,AWRF,Score,CI_lo,CI_hi" : "run,EE-R,EE-D,EE-L,CI_lo,CI_hi") << '\n';
    for (const auto& r : rows)
        out << r.run << ',' << format_double(r.a) << ',' << format_double(r.b) << ','
            << format_double(r.score) << ',' << format_double(r.lo) << ',' << format_double(r.hi) << '\n';
    log.info("combined " + std::to_string(rows.size()) + " reports into " + cfg.out);
    return 0;
}

}  // namespace fareval
