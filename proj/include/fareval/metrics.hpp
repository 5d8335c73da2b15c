#pragma once

// Run scoring: nDCG, AWRF and their product for Task 1; document/group
// exposure and the expected-exposure decomposition for Task 2; percentile
// bootstrap confidence intervals; and the per-topic evaluation drivers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fareval/alignment.hpp"
#include "fareval/core.hpp"
#include "fareval/errors.hpp"
#include "fareval/run_io.hpp"
#include "fareval/targets.hpp"

namespace fareval {

enum class UnknownMode {
    Group,   // fully-unknown is a distinct category (2022 behavior)
    Ignore,  // fully-unknown documents contribute no exposure
};

// How a page aligns over a dimension subset, as sparse (key, weight) pairs.
// Pages missing from the table count as fully unknown.
namespace detail {

inline void page_subspace_alignment(const AlignmentTable& align, std::size_t row,
                                    std::span<const std::size_t> dims,
                                    std::vector<std::pair<std::uint64_t, double>>& out) {
    out.assign(1, {0, 1.0});
    static thread_local std::vector<std::pair<std::uint64_t, double>> next;
    for (std::size_t d : dims) {
        std::uint64_t size = align.space().dims[d].size();
        auto r = align.row(d, row);
        next.clear();
        for (const auto& [key, w] : out)
            for (const auto& e : r) next.emplace_back(key * size + e.label, w * e.weight);
        out.swap(next);
    }
}

// Flattened index of the all-unknown cell, or nullopt when some dimension in
// the subset has no unknown slot (then no document can be fully unknown).
inline std::optional<std::uint64_t> all_unknown_cell(const GroupSpace& space,
                                                     std::span<const std::size_t> dims) {
    for (std::size_t d : dims)
        if (!space.dims[d].has_unknown()) return std::nullopt;
    return 0;  // unknown is label 0 in every dimension, so the flat key is 0
}

}  // namespace detail

// ---------------------------------------------------------------------------
// nDCG

// Binary-relevance nDCG with log discounting; the ideal truncates at
// min(|relevant|, ranking length).
inline double ndcg(const Ranking& ranking, const std::unordered_set<std::int64_t>& relevant) {
    if (relevant.empty())
        throw UndefinedMetric("topic " + std::to_string(ranking.topic_id) + ": no relevant documents");
    detail::KahanSum dcg;
    for (std::size_t i = 0; i < ranking.pages.size(); ++i)
        if (relevant.count(ranking.pages[i])) dcg.add(position_discount(i + 1));
    std::size_t ideal_len = std::min(relevant.size(), ranking.pages.size());
    detail::KahanSum ideal;
    for (std::size_t i = 1; i <= ideal_len; ++i) ideal.add(position_discount(i));
    if (ideal.sum <= 0.0) return 0.0;
    return dcg.sum / ideal.sum;
}

// ---------------------------------------------------------------------------
// AWRF

// Attention accumulated over a ranking on the evaluation space. Unnormalized.
inline Distribution cumulated_attention(const Ranking& ranking, const AlignmentTable& align,
                                        std::span<const std::size_t> dims) {
    GroupSpace sub = align.space().subspace(dims);
    SparseAccumulator acc(sub.cardinality());
    auto unknown_cell = detail::all_unknown_cell(align.space(), dims);
    std::vector<std::pair<std::uint64_t, double>> cells;
    for (std::size_t i = 0; i < ranking.pages.size(); ++i) {
        double w = position_discount(i + 1);
        auto row = align.row_of(ranking.pages[i]);
        if (!row) {
            // ranked but unaligned pages count as fully unknown
            if (unknown_cell) acc.add(*unknown_cell, w);
            continue;
        }
        detail::page_subspace_alignment(align, *row, dims, cells);
        for (const auto& [key, v] : cells) acc.add(key, w * v);
    }
    return acc.freeze();
}

namespace detail {
// In ignore mode the all-unknown cell is removed from both sides before
// normalization, so fully-unknown documents contribute no exposure.
inline Distribution drop_unknown_cell(const Distribution& d, std::uint64_t cell) {
    Distribution out;
    out.cardinality = d.cardinality;
    for (const auto& [key, v] : d.cells)
        if (key != cell) out.cells.emplace_back(key, v);
    return out;
}
}  // namespace detail

// AWRF = 1 - JS(normalized cumulated attention, target).
inline double awrf(const Ranking& ranking, const AlignmentTable& align, const Distribution& target,
                   std::span<const std::size_t> dims, UnknownMode mode = UnknownMode::Group) {
    Distribution attention = cumulated_attention(ranking, align, dims);
    Distribution tgt = target;
    if (mode == UnknownMode::Ignore) {
        if (auto cell = detail::all_unknown_cell(align.space(), dims)) {
            attention = detail::drop_unknown_cell(attention, *cell);
            tgt = detail::drop_unknown_cell(tgt, *cell);
        }
    }
    if (attention.cells.empty())
        throw UndefinedMetric("topic " + std::to_string(ranking.topic_id) +
                              ": ranking accumulates no attention on this space");
    if (tgt.cells.empty())
        throw UndefinedMetric("topic " + std::to_string(ranking.topic_id) + ": empty target");
    return 1.0 - js_divergence(normalize(attention), normalize(tgt));
}

inline double m1(double awrf_score, double ndcg_score) { return awrf_score * ndcg_score; }

// ---------------------------------------------------------------------------
// Expected exposure

// Mean discount each document receives over the sequence; documents absent
// from a ranking earn 0 there. Returned sorted by page id.
inline std::vector<std::pair<std::int64_t, double>> document_exposure(const RankingSequence& seq) {
    if (seq.rankings.empty()) throw InvalidArgument("document_exposure: empty sequence");
    std::unordered_map<std::int64_t, double> totals;
    for (const auto& r : seq.rankings)
        for (std::size_t i = 0; i < r.pages.size(); ++i)
            totals[r.pages[i]] += position_discount(i + 1);
    std::vector<std::pair<std::int64_t, double>> out(totals.begin(), totals.end());
    std::sort(out.begin(), out.end());
    double n = static_cast<double>(seq.rankings.size());
    for (auto& [page, e] : out) e /= n;
    return out;
}

// Group exposure over the evaluation space: exposure mass distributed by
// alignment weights. Total mass is preserved; pages missing from the table
// land on the all-unknown cell (when the space has one).
inline Distribution group_exposure(std::span<const std::pair<std::int64_t, double>> exposure,
                                   const AlignmentTable& align, std::span<const std::size_t> dims) {
    GroupSpace sub = align.space().subspace(dims);
    SparseAccumulator acc(sub.cardinality());
    auto unknown_cell = detail::all_unknown_cell(align.space(), dims);
    std::vector<std::pair<std::uint64_t, double>> cells;
    for (const auto& [page, e] : exposure) {
        auto row = align.row_of(page);
        if (!row) {
            if (unknown_cell) acc.add(*unknown_cell, e);
            continue;
        }
        detail::page_subspace_alignment(align, *row, dims, cells);
        for (const auto& [key, v] : cells) acc.add(key, e * v);
    }
    return acc.freeze();
}

struct ExpectedExposure {
    double ee_l = 0.0;  // squared L2 distance (or the norm, by option)
    double ee_d = 0.0;  // system self-dot
    double ee_r = 0.0;  // system/target dot
    double target_self = 0.0;
};

// Compares system group exposure against the target exposure for the same
// space. EE-L is reported squared by default, matching the dot-product
// expansion EE-L = EE-D - 2*EE-R + target.target.
inline ExpectedExposure expected_exposure(const Distribution& system, const Distribution& target,
                                          bool squared = true) {
    if (system.cardinality != target.cardinality)
        throw InvalidArgument("expected_exposure: system and target spaces differ");
    ExpectedExposure r;
    detail::KahanSum dd, rr, tt, ll;
    std::size_t i = 0, j = 0;
    while (i < system.cells.size() || j < target.cells.size()) {
        std::uint64_t ks = i < system.cells.size() ? system.cells[i].first : UINT64_MAX;
        std::uint64_t kt = j < target.cells.size() ? target.cells[j].first : UINT64_MAX;
        double sv = 0.0, tv = 0.0;
        if (ks <= kt) sv = system.cells[i++].second;
        if (kt <= ks) tv = target.cells[j++].second;
        dd.add(sv * sv);
        rr.add(sv * tv);
        tt.add(tv * tv);
        double diff = sv - tv;
        ll.add(diff * diff);
    }
    r.ee_d = dd.sum;
    r.ee_r = rr.sum;
    r.target_self = tt.sum;
    r.ee_l = squared ? ll.sum : std::sqrt(ll.sum);
    return r;
}

// ---------------------------------------------------------------------------
// Bootstrap confidence intervals

// Percentile bootstrap over topic resampling. Deterministic under a fixed
// seed; quantiles use linear interpolation between order statistics.
inline std::pair<double, double> bootstrap_ci(std::span<const double> scores, double level = 0.95,
                                              std::size_t resamples = 10000, std::uint64_t seed = 42) {
    if (scores.size() < 2) throw UndefinedCI("bootstrap_ci: need at least 2 topics");
    std::mt19937_64 rng(seed);
    std::vector<double> means(resamples);
    const std::size_t n = scores.size();
    for (std::size_t b = 0; b < resamples; ++b) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += scores[rng() % n];
        means[b] = total / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double q) {
        double pos = q * static_cast<double>(means.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        std::size_t hi = std::min(lo + 1, means.size() - 1);
        double frac = pos - static_cast<double>(lo);
        return means[lo] * (1.0 - frac) + means[hi] * frac;
    };
    double alpha = (1.0 - level) / 2.0;
    return {quantile(alpha), quantile(1.0 - alpha)};
}

// ---------------------------------------------------------------------------
// Evaluation drivers

struct EvalConfig {
    UnknownMode unknown_mode = UnknownMode::Group;
    bool ee_l_squared = true;
    double ci_level = 0.95;
    std::size_t bootstrap_resamples = 10000;
    std::uint64_t bootstrap_seed = 42;
    // named dimension subsets evaluated alongside the full space
    std::vector<std::pair<std::string, std::vector<std::string>>> subsets;
};

struct TopicScore {
    std::int64_t topic_id = 0;
    // metric name -> value; breakdowns use "metric:dimension" keys
    std::map<std::string, double> values;
};

struct MetricReport {
    int task = 1;
    std::string run_name;
    std::vector<TopicScore> topics;
    std::map<std::string, double> aggregate;                      // means over topics
    std::map<std::string, std::pair<double, double>> intervals;   // bootstrap CIs
    std::vector<std::string> diagnostics;

    void note(std::string msg) {
        if (diagnostics.size() < 1000) diagnostics.push_back(std::move(msg));
    }
};

// Target distributions for one topic, keyed by evaluation-space name:
// "" for the full intersectional space, dimension names for single dims,
// subset names for configured subsets.
struct TopicTargets {
    std::int64_t topic_id = 0;
    std::map<std::string, Distribution> spaces;
};

namespace detail {

inline std::vector<std::size_t> dims_for_space(const GroupSpace& space, const std::string& name,
                                               const EvalConfig& config) {
    if (name.empty()) return all_dims(space);
    if (auto d = space.dim_index(name)) return {*d};
    for (const auto& [subset, dim_names] : config.subsets)
        if (subset == name) {
            std::vector<std::size_t> dims;
            for (const auto& dn : dim_names) {
                auto d = space.dim_index(dn);
                if (!d) throw ConfigError("subset '" + name + "': unknown dimension '" + dn + "'");
                dims.push_back(*d);
            }
            std::sort(dims.begin(), dims.end());
            return dims;
        }
    throw ConfigError("no evaluation space named '" + name + "'");
}

inline void aggregate_report(MetricReport& report, const EvalConfig& config,
                             const std::string& ci_metric) {
    std::map<std::string, std::vector<double>> columns;
    for (const auto& t : report.topics)
        for (const auto& [k, v] : t.values) columns[k].push_back(v);
    for (const auto& [k, vals] : columns) {
        detail::KahanSum sum;
        for (double v : vals) sum.add(v);
        report.aggregate[k] = sum.sum / static_cast<double>(vals.size());
    }
    if (auto it = columns.find(ci_metric); it != columns.end() && it->second.size() >= 2)
        report.intervals[ci_metric] = bootstrap_ci(it->second, config.ci_level,
                                                   config.bootstrap_resamples, config.bootstrap_seed);
}

}  // namespace detail

// Scores a Task 1 run: per-topic nDCG, AWRF and M1 on the full intersectional
// space, plus AWRF/M1 breakdowns per dimension and configured subset.
inline MetricReport evaluate_task1(const RunData& run, const std::vector<Qrels>& qrels,
                                   const AlignmentTable& align,
                                   const std::vector<TopicTargets>& targets, const EvalConfig& config) {
    MetricReport report;
    report.task = 1;
    report.run_name = run.source_path;
    for (const auto& w : run.warnings) report.note(w);

    std::unordered_map<std::int64_t, const Qrels*> qrels_by_topic;
    for (const auto& q : qrels) qrels_by_topic[q.topic_id] = &q;
    std::unordered_map<std::int64_t, const TopicTargets*> targets_by_topic;
    for (const auto& t : targets) targets_by_topic[t.topic_id] = &t;

    for (const auto& ranking : run.task1) {
        auto qit = qrels_by_topic.find(ranking.topic_id);
        auto tit = targets_by_topic.find(ranking.topic_id);
        if (qit == qrels_by_topic.end() || tit == targets_by_topic.end()) {
            report.note("topic " + std::to_string(ranking.topic_id) + ": missing qrels or targets, skipped");
            continue;
        }
        std::unordered_set<std::int64_t> relevant(qit->second->pages.begin(), qit->second->pages.end());
        TopicScore score;
        score.topic_id = ranking.topic_id;
        try {
            double n = ndcg(ranking, relevant);
            score.values["nDCG"] = n;
            for (const auto& [space_name, target] : tit->second->spaces) {
                auto dims = detail::dims_for_space(align.space(), space_name, config);
                double a = awrf(ranking, align, target, dims, config.unknown_mode);
                std::string suffix = space_name.empty() ? "" : ":" + space_name;
                score.values["AWRF" + suffix] = a;
                score.values["M1" + suffix] = m1(a, n);
            }
        } catch (const UndefinedMetric& e) {
            report.note(std::string("undefined metric, topic excluded: ") + e.what());
            continue;
        }
        report.topics.push_back(std::move(score));
    }
    detail::aggregate_report(report, config, "M1");
    return report;
}

// Scores a Task 2 run: EE-L / EE-D / EE-R against target exposure on every
// configured space.
inline MetricReport evaluate_task2(const RunData& run, const std::vector<Qrels>& qrels,
                                   const AlignmentTable& align,
                                   const std::vector<TopicTargets>& targets, const EvalConfig& config) {
    MetricReport report;
    report.task = 2;
    report.run_name = run.source_path;
    for (const auto& w : run.warnings) report.note(w);

    std::unordered_map<std::int64_t, const TopicTargets*> targets_by_topic;
    for (const auto& t : targets) targets_by_topic[t.topic_id] = &t;
    (void)qrels;

    for (const auto& seq : run.task2) {
        auto tit = targets_by_topic.find(seq.topic_id);
        if (tit == targets_by_topic.end()) {
            report.note("topic " + std::to_string(seq.topic_id) + ": missing targets, skipped");
            continue;
        }
        if (seq.rankings.empty()) {
            report.note("topic " + std::to_string(seq.topic_id) + ": empty sequence, skipped");
            continue;
        }
        auto exposure = document_exposure(seq);
        TopicScore score;
        score.topic_id = seq.topic_id;
        for (const auto& [space_name, target] : tit->second->spaces) {
            auto dims = detail::dims_for_space(align.space(), space_name, config);
            Distribution sys = group_exposure(exposure, align, dims);
            Distribution tgt = target;
            if (config.unknown_mode == UnknownMode::Ignore) {
                if (auto cell = detail::all_unknown_cell(align.space(), dims)) {
                    sys = detail::drop_unknown_cell(sys, *cell);
                    tgt = detail::drop_unknown_cell(tgt, *cell);
                }
            }
            auto ee = expected_exposure(sys, tgt, config.ee_l_squared);
            std::string suffix = space_name.empty() ? "" : ":" + space_name;
            score.values["EE-L" + suffix] = ee.ee_l;
            score.values["EE-D" + suffix] = ee.ee_d;
            score.values["EE-R" + suffix] = ee.ee_r;
        }
        report.topics.push_back(std::move(score));
    }
    detail::aggregate_report(report, config, "EE-L");
    return report;
}

}  // namespace fareval
