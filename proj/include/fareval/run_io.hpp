#pragma once

// Parsers and writers for the external file formats: run files, qrels,
// topics, the dimension registry, background vectors, and the quality table.
// Formats are documented byte-exactly in docs/formats.md.

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareval/core.hpp"
#include "fareval/errors.hpp"
#include "fareval/io_util.hpp"

namespace fareval {

struct Ranking {
    std::int64_t topic_id = 0;
    std::vector<std::int64_t> pages;
};

struct RankingSequence {
    std::int64_t topic_id = 0;
    std::vector<Ranking> rankings;
};

struct Qrels {
    std::int64_t topic_id = 0;
    std::vector<std::int64_t> pages;
};

struct TopicFile {
    std::int64_t id = 0;
    std::string title;
    std::vector<std::string> keywords;
    std::vector<std::int64_t> rel_docs;  // training topics only
    std::string homepage;                // attribution, ignored by scoring
};

// Parsed run submission for either task, with provenance and validation
// warnings retained for the reports.
struct RunData {
    int task = 1;
    std::string source_path;
    std::size_t line_count = 0;
    std::vector<Ranking> task1;             // one ranking per topic
    std::vector<RankingSequence> task2;     // one sequence per topic
    std::vector<std::string> warnings;

    std::vector<std::int64_t> topic_ids() const {
        std::vector<std::int64_t> ids;
        if (task == 1)
            for (const auto& r : task1) ids.push_back(r.topic_id);
        else
            for (const auto& s : task2) ids.push_back(s.topic_id);
        return ids;
    }

    void warn(std::string msg) {
        if (warnings.size() < 1000) warnings.push_back(std::move(msg));
    }
};

struct TaskLimits {
    std::size_t task1_length = 500;
    std::size_t task2_length = 20;
    std::size_t task2_rankings = 100;
};

// ---------------------------------------------------------------------------
// Run files (strictly TAB-separated, per the track output format)

inline RunData parse_run(const std::string& path, int task, const TaskLimits& limits = {}) {
    if (task != 1 && task != 2) throw InvalidArgument("task must be 1 or 2");
    RunData run;
    run.task = task;
    run.source_path = path;

    const std::size_t want_cols = task == 1 ? 2 : 3;
    // topic -> (rep -> pages), reps collected in arrival order then reindexed
    std::vector<std::int64_t> topic_order;
    std::map<std::int64_t, std::map<std::int64_t, std::vector<std::int64_t>>> by_topic;
    std::map<std::int64_t, std::size_t> topic_line;  // last line per topic, for structural errors

    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        ++run.line_count;
        if (line.empty()) continue;
        auto cols = split_on(line, '\t');
        if (cols.size() != want_cols)
            throw ParseError(path, reader.line_number(),
                             "expected " + std::to_string(want_cols) + " tab-separated columns, got " +
                                 std::to_string(cols.size()));
        std::int64_t topic, rep = 1, page;
        if (!parse_int64(cols[0], topic))
            throw ParseError(path, reader.line_number(), "non-integer topic id");
        if (task == 2 && !parse_int64(cols[1], rep))
            throw ParseError(path, reader.line_number(), "non-integer rep_number");
        if (!parse_int64(cols[want_cols - 1], page))
            throw ParseError(path, reader.line_number(), "non-integer page id");
        if (!by_topic.count(topic)) topic_order.push_back(topic);
        by_topic[topic][rep].push_back(page);
        topic_line[topic] = reader.line_number();
    }

    if (by_topic.empty()) run.warn("empty run file: " + path);

    const std::size_t max_len = task == 1 ? limits.task1_length : limits.task2_length;
    auto finish_ranking = [&](std::int64_t topic, std::vector<std::int64_t>& pages, const std::string& what) {
        Ranking r;
        r.topic_id = topic;
        std::unordered_set<std::int64_t> seen;
        for (std::int64_t p : pages) {
            if (!seen.insert(p).second) {
                run.warn(what + ": duplicate page " + std::to_string(p) + ", keeping first occurrence");
                continue;
            }
            r.pages.push_back(p);
        }
        if (r.pages.size() > max_len) {
            run.warn(what + ": length " + std::to_string(r.pages.size()) + " exceeds task limit " +
                     std::to_string(max_len) + ", truncating");
            r.pages.resize(max_len);
        }
        return r;
    };

    for (std::int64_t topic : topic_order) {
        auto& reps = by_topic[topic];
        if (task == 1) {
            run.task1.push_back(
                finish_ranking(topic, reps.begin()->second, "topic " + std::to_string(topic)));
        } else {
            // reps must form 1..N; any arrival order is accepted and reindexed
            std::int64_t expected = 1;
            for (const auto& [rep, pages] : reps) {
                if (rep != expected)
                    throw ParseError(path, topic_line[topic],
                                     "topic " + std::to_string(topic) + ": rep_numbers are not contiguous (" +
                                         std::to_string(expected) + " missing)");
                ++expected;
            }
            RankingSequence seq;
            seq.topic_id = topic;
            for (auto& [rep, pages] : reps)
                seq.rankings.push_back(finish_ranking(
                    topic, pages, "topic " + std::to_string(topic) + " rep " + std::to_string(rep)));
            if (seq.rankings.size() != limits.task2_rankings)
                run.warn("topic " + std::to_string(topic) + ": " + std::to_string(seq.rankings.size()) +
                         " rankings, task expects " + std::to_string(limits.task2_rankings));
            run.task2.push_back(std::move(seq));
        }
    }
    return run;
}

// Canonical writer; parse(serialize(run)) == run for valid in-memory data.
inline void serialize_run(const RunData& run, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    if (run.task == 1) {
        for (const auto& r : run.task1)
            for (std::int64_t p : r.pages) out << r.topic_id << '\t' << p << '\n';
    } else {
        for (const auto& s : run.task2)
            for (std::size_t rep = 0; rep < s.rankings.size(); ++rep)
                for (std::int64_t p : s.rankings[rep].pages)
                    out << s.topic_id << '\t' << (rep + 1) << '\t' << p << '\n';
    }
}

// ---------------------------------------------------------------------------
// Qrels (whitespace-separated topic/page pairs)

inline std::vector<Qrels> parse_qrels(const std::string& path, std::vector<std::string>* warnings = nullptr) {
    std::vector<std::int64_t> order;
    std::map<std::int64_t, std::vector<std::int64_t>> by_topic;
    std::map<std::int64_t, std::unordered_set<std::int64_t>> seen;

    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (line.empty()) continue;
        auto cols = split_ws(line);
        if (cols.size() != 2)
            throw ParseError(path, reader.line_number(), "expected 2 columns (topic_id page_id)");
        std::int64_t topic, page;
        if (!parse_int64(cols[0], topic) || !parse_int64(cols[1], page))
            throw ParseError(path, reader.line_number(), "non-integer field");
        if (!by_topic.count(topic)) order.push_back(topic);
        if (!seen[topic].insert(page).second) {
            if (warnings)
                warnings->push_back(path + ":" + std::to_string(reader.line_number()) +
                                    ": duplicate qrel pair, deduplicated");
            continue;
        }
        by_topic[topic].push_back(page);
    }
    std::vector<Qrels> out;
    for (std::int64_t t : order) out.push_back({t, std::move(by_topic[t])});
    return out;
}

inline void serialize_qrels(const std::vector<Qrels>& qrels, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (const auto& q : qrels)
        for (std::int64_t p : q.pages) out << q.topic_id << '\t' << p << '\n';
}

// ---------------------------------------------------------------------------
// Topics (JSONL)

inline std::vector<TopicFile> parse_topics(const std::string& path) {
    std::vector<TopicFile> topics;
    std::set<std::int64_t> ids;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw ParseError(path, reader.line_number(), "invalid JSON record");
        TopicFile t;
        try {
            t.id = j.at("id").get<std::int64_t>();
            t.title = j.value("title", "");
            for (const auto& k : j.at("keywords")) t.keywords.push_back(k.get<std::string>());
            if (j.contains("rel_docs"))
                for (const auto& d : j.at("rel_docs")) t.rel_docs.push_back(d.get<std::int64_t>());
            t.homepage = j.value("homepage", "");
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path, reader.line_number(), std::string("bad topic record: ") + e.what());
        }
        if (t.keywords.empty()) throw ParseError(path, reader.line_number(), "topic has no keywords");
        if (!ids.insert(t.id).second)
            throw ParseError(path, reader.line_number(), "duplicate topic id " + std::to_string(t.id));
        topics.push_back(std::move(t));
    }
    return topics;
}

// ---------------------------------------------------------------------------
// Backgrounds and the dimension registry

// A background file is CSV "label,weight" with one row per known label.
inline std::vector<std::pair<std::string, double>> load_background(const std::string& path) {
    std::vector<std::pair<std::string, double>> bg;
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (line.empty() || line[0] == '#') continue;
        auto pos = line.rfind(',');
        if (pos == std::string::npos)
            throw ParseError(path, reader.line_number(), "expected 'label,weight'");
        std::string label = line.substr(0, pos);
        char* end = nullptr;
        double v = std::strtod(line.c_str() + pos + 1, &end);
        if (end == line.c_str() + pos + 1)
            throw ParseError(path, reader.line_number(), "bad weight");
        bg.emplace_back(label, v);
    }
    double sum = 0.0;
    for (const auto& [l, v] : bg) {
        if (v < 0.0) throw ConfigError(path + ": negative background weight for '" + l + "'");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError(path + ": background sums to " + std::to_string(sum) + ", expected 1");
    return bg;
}

// Registry JSON: {"dimensions": [{"name","labels",["unknown"],["background"]}]}
// where "background" is a file path (relative to the registry) or an inline
// label->weight object. Averaged dimensions must be listed first.
inline GroupSpace load_registry(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingInput("cannot open registry " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("dimensions"))
        throw ConfigError(path + ": registry must contain a 'dimensions' array");

    GroupSpace space;
    for (const auto& jd : j.at("dimensions")) {
        DimensionSpec dim;
        try {
            dim.name = jd.at("name").get<std::string>();
            for (const auto& l : jd.at("labels")) dim.labels.push_back(l.get<std::string>());
            if (jd.value("unknown", false)) dim.unknown_index = 0;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ": bad dimension entry: " + e.what());
        }
        if (dim.has_unknown() && (dim.labels.empty() || dim.labels[0] != kUnknownLabel))
            throw ConfigError(path + ": dimension '" + dim.name + "' must list '" +
                              std::string(kUnknownLabel) + "' first");
        if (jd.contains("background")) {
            std::vector<std::pair<std::string, double>> bg;
            if (jd.at("background").is_string()) {
                auto bg_path = std::filesystem::path(path).parent_path() /
                               jd.at("background").get<std::string>();
                bg = load_background(bg_path.string());
            } else if (jd.at("background").is_object()) {
                double sum = 0.0;
                for (const auto& [label, v] : jd.at("background").items()) {
                    bg.emplace_back(label, v.get<double>());
                    sum += v.get<double>();
                }
                if (std::abs(sum - 1.0) > 1e-9)
                    throw ConfigError(path + ": inline background for '" + dim.name + "' does not sum to 1");
            } else {
                throw ConfigError(path + ": background must be a file path or an object");
            }
            // align by label name onto the known labels
            dim.background.assign(dim.labels.size() - dim.known_begin(), 0.0);
            std::set<std::string> known(dim.labels.begin() + dim.known_begin(), dim.labels.end());
            for (const auto& [label, v] : bg) {
                auto idx = dim.label_index(label);
                if (!idx || *idx < dim.known_begin())
                    throw ConfigError(path + ": background label '" + label + "' is not a known label of '" +
                                      dim.name + "'");
                dim.background[*idx - dim.known_begin()] = v;
                known.erase(label);
            }
            if (!known.empty())
                throw ConfigError(path + ": background for '" + dim.name + "' missing label '" +
                                  *known.begin() + "'");
        }
        space.dims.push_back(std::move(dim));
    }
    space.validate();
    return space;
}

// ---------------------------------------------------------------------------
// Quality table

// Reads page_id -> quality label from JSONL metadata (field qual_cat) or from
// a two-column CSV "page_id,quality". Labels outside the six-level set are
// rejected, not coerced.
inline std::unordered_map<std::int64_t, int> parse_metadata(const std::string& path) {
    std::unordered_map<std::int64_t, int> quality;
    LineReader reader(path);
    std::string line;
    bool jsonl = true;
    while (reader.next(line)) {
        if (line.empty()) continue;
        if (reader.line_number() == 1) jsonl = !line.empty() && line[0] == '{';
        std::int64_t page;
        std::string label;
        if (jsonl) {
            nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.contains("page_id") || !j.contains("qual_cat"))
                throw ParseError(path, reader.line_number(), "invalid metadata record");
            page = j.at("page_id").get<std::int64_t>();
            label = j.at("qual_cat").get<std::string>();
        } else {
            if (line == "page_id,quality") continue;  // header
            auto pos = line.find(',');
            if (pos == std::string::npos || !parse_int64(line.substr(0, pos), page))
                throw ParseError(path, reader.line_number(), "expected 'page_id,quality'");
            label = line.substr(pos + 1);
        }
        auto rank = try_quality_work_rank(label);
        if (!rank) throw ParseError(path, reader.line_number(), "quality label '" + label + "' not in scale");
        quality[page] = *rank;
    }
    return quality;
}

}  // namespace fareval
