#pragma once

// Per-topic fairness target construction. Single-dimension targets use the
// halve-and-add background averaging; intersectional targets accumulate
// per-page outer products sparsely and then average each known/unknown case
// of the leading (averaged) dimensions with an intersectional background.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "fareval/alignment.hpp"
#include "fareval/core.hpp"
#include "fareval/errors.hpp"
#include "fareval/run_io.hpp"

namespace fareval {

// ---------------------------------------------------------------------------
// Qrels resolved against an alignment table

struct ResolvedTopic {
    std::int64_t topic_id = 0;
    std::vector<std::size_t> rows;           // alignment row indices
    std::vector<std::int64_t> missing;       // qrel pages absent from the table
};

inline ResolvedTopic resolve_topic(const AlignmentTable& align, const Qrels& qrels) {
    ResolvedTopic t;
    t.topic_id = qrels.topic_id;
    for (std::int64_t p : qrels.pages) {
        if (auto row = align.row_of(p))
            t.rows.push_back(*row);
        else
            t.missing.push_back(p);
    }
    return t;
}

// ---------------------------------------------------------------------------
// Per-page outer-product factors

// Sparse per-page tensors over a subset of dimensions, all indexed by the
// same page list. The averaged-dims factor may carry per-page weights.
struct OuterFactors {
    std::vector<std::size_t> pages;  // alignment row indices
    std::vector<std::vector<std::pair<std::uint64_t, double>>> rows;
    std::uint64_t cardinality = 1;
};

inline OuterFactors make_factors(const AlignmentTable& align, std::span<const std::size_t> page_rows,
                                 std::span<const std::size_t> dim_indices,
                                 std::span<const double> weights = {}) {
    if (!weights.empty() && weights.size() != page_rows.size())
        throw InvalidArgument("make_factors: weight count does not match page count");
    OuterFactors f;
    f.pages.assign(page_rows.begin(), page_rows.end());
    std::vector<std::uint64_t> sizes;
    for (std::size_t d : dim_indices) sizes.push_back(align.space().dims[d].size());
    for (std::uint64_t s : sizes) f.cardinality *= s;

    f.rows.reserve(page_rows.size());
    std::vector<std::pair<std::uint64_t, double>> cur, next;
    for (std::size_t p = 0; p < page_rows.size(); ++p) {
        cur.assign(1, {0, weights.empty() ? 1.0 : weights[p]});
        for (std::size_t di = 0; di < dim_indices.size(); ++di) {
            auto row = align.row(dim_indices[di], page_rows[p]);
            next.clear();
            for (const auto& [key, w] : cur)
                for (const auto& e : row)
                    next.emplace_back(key * sizes[di] + e.label, w * e.weight);
            std::swap(cur, next);
        }
        f.rows.push_back(cur);
    }
    return f;
}

namespace detail {
inline Distribution outer_accumulate(const OuterFactors& avg, const OuterFactors& raw, double scale) {
    if (avg.pages != raw.pages)
        throw InvalidArgument("outer accumulation: factor page lists differ");
    SparseAccumulator acc(avg.cardinality * raw.cardinality);
    for (std::size_t p = 0; p < avg.pages.size(); ++p)
        for (const auto& [ak, av] : avg.rows[p])
            for (const auto& [rk, rv] : raw.rows[p])
                acc.add(ak * raw.cardinality + rk, av * rv * scale);
    return acc.freeze();
}
}  // namespace detail

// (1/n) sum over pages of outer(avg_row, raw_row), never materializing a
// per-page dense tensor.
inline Distribution mean_outer(const OuterFactors& avg, const OuterFactors& raw) {
    if (avg.pages.empty()) throw InvalidArgument("mean_outer: no pages");
    return detail::outer_accumulate(avg, raw, 1.0 / static_cast<double>(avg.pages.size()));
}

// Plain weighted sum; weights ride along inside the averaged factor.
inline Distribution sum_outer(const OuterFactors& avg, const OuterFactors& raw) {
    return detail::outer_accumulate(avg, raw, 1.0);
}

// ---------------------------------------------------------------------------
// Background averaging over known/unknown cases

// For each of the 2^k - 1 known/unknown cases over the k leading averaged
// dimensions (all-unknown excluded): select the case's sub-tensor, spread the
// known dims' intersectional background over the tail dims proportionally to
// each coordinate's tail profile (imputing the global marginal tail profile
// where a coordinate has no mass), and replace the sub-tensor by
// 0.5*itself + 0.5*spread*case_mass. Case masses are preserved.
inline Distribution avg_with_bg(const Distribution& target, const GroupSpace& space,
                                std::size_t avg_count_override = SIZE_MAX) {
    std::size_t avg_count =
        avg_count_override == SIZE_MAX ? space.averaged_count() : avg_count_override;
    if (avg_count == 0) return target;
    if (avg_count > space.dims.size()) throw InvalidArgument("avg_with_bg: bad averaged-dim count");
    for (std::size_t d = 0; d < avg_count; ++d)
        if (!space.dims[d].has_background())
            throw InvalidArgument("avg_with_bg: dimension '" + space.dims[d].name + "' has no background");
    if (target.cardinality != space.cardinality())
        throw InvalidArgument("avg_with_bg: target does not match the group space");

    std::uint64_t avg_card = 1, tail_card = 1;
    for (std::size_t d = 0; d < avg_count; ++d) avg_card *= space.dims[d].size();
    for (std::size_t d = avg_count; d < space.dims.size(); ++d) tail_card *= space.dims[d].size();

    std::vector<std::uint64_t> avg_sizes;
    for (std::size_t d = 0; d < avg_count; ++d) avg_sizes.push_back(space.dims[d].size());
    auto avg_coords = [&](std::uint64_t avg_key, std::vector<std::uint64_t>& out) {
        out.resize(avg_count);
        for (std::size_t d = avg_count; d-- > 0;) {
            out[d] = avg_key % avg_sizes[d];
            avg_key /= avg_sizes[d];
        }
    };

    // tail profile per averaged coordinate, plus the global tail marginal
    std::unordered_map<std::uint64_t, double> tail_mass;
    std::unordered_map<std::uint64_t, detail::KahanSum> tail_marg_acc;
    for (const auto& [key, v] : target.cells) {
        tail_mass[key / tail_card] += v;
        tail_marg_acc[key % tail_card].add(v);
    }
    std::vector<std::pair<std::uint64_t, double>> tail_marg;
    tail_marg.reserve(tail_marg_acc.size());
    double tail_total = 0.0;
    for (const auto& [tk, acc] : tail_marg_acc) {
        tail_marg.emplace_back(tk, acc.sum);
        tail_total += acc.sum;
    }
    std::sort(tail_marg.begin(), tail_marg.end());
    if (tail_total <= 0.0) throw DegenerateDistribution("avg_with_bg: empty target");

    // case id of an averaged coordinate: bit d set when dim d is known
    // (a dimension without an unknown slot is always known)
    std::vector<std::uint64_t> case_coords;
    auto case_of = [&](std::uint64_t avg_key) {
        std::uint64_t mask = 0;
        avg_coords(avg_key, case_coords);
        for (std::size_t d = 0; d < avg_count; ++d)
            if (!space.dims[d].has_unknown() || case_coords[d] != 0) mask |= (1ull << d);
        return mask;
    };

    const std::uint64_t ncases = 1ull << avg_count;
    std::vector<detail::KahanSum> case_mass(ncases);
    for (const auto& [key, v] : target.cells) case_mass[case_of(key / tail_card)].add(v);

    auto background_at = [&](const std::vector<std::uint64_t>& coords, std::uint64_t mask) {
        double bg = 1.0;
        for (std::size_t d = 0; d < avg_count; ++d)
            if (mask & (1ull << d)) {
                const auto& dim = space.dims[d];
                bg *= dim.background[coords[d] - dim.known_begin()];
            }
        return bg;
    };

    std::vector<std::pair<std::uint64_t, double>> out_cells;
    out_cells.reserve(target.cells.size());

    // existing cells: all-unknown case passes through, others are averaged
    // against their coordinate's own tail profile
    std::vector<std::uint64_t> coords;
    for (const auto& [key, v] : target.cells) {
        std::uint64_t ak = key / tail_card;
        std::uint64_t mask = case_of(ak);
        if (mask == 0) {
            out_cells.emplace_back(key, v);
            continue;
        }
        avg_coords(ak, coords);
        double spread = background_at(coords, mask) * (v / tail_mass[ak]) * case_mass[mask].sum;
        out_cells.emplace_back(key, 0.5 * v + 0.5 * spread);
    }

    // coordinates with no mass of their own receive the background spread over
    // the imputed global tail profile
    std::vector<std::uint64_t> stack(avg_count, 0);
    std::vector<std::uint64_t> kb(avg_count);
    for (std::size_t d = 0; d < avg_count; ++d) kb[d] = space.dims[d].known_begin();
    for (std::uint64_t mask = 1; mask < ncases; ++mask) {
        // dims without an unknown slot cannot be "unknown" in a case
        bool feasible = true;
        for (std::size_t d = 0; d < avg_count; ++d)
            if (!(mask & (1ull << d)) && !space.dims[d].has_unknown()) feasible = false;
        if (!feasible || case_mass[mask].sum <= 0.0) continue;

        // enumerate the case region: known dims over known labels, unknown at 0
        std::vector<std::size_t> radix;
        for (std::size_t d = 0; d < avg_count; ++d)
            radix.push_back(mask & (1ull << d) ? space.dims[d].size() - kb[d] : 1);
        std::uint64_t region = 1;
        for (std::size_t r : radix) region *= r;
        for (std::uint64_t i = 0; i < region; ++i) {
            std::uint64_t rem = i, ak = 0;
            for (std::size_t d = avg_count; d-- > 0;) {
                std::uint64_t c = mask & (1ull << d) ? kb[d] + rem % radix[d] : 0;
                rem /= radix[d];
                stack[d] = c;
            }
            for (std::size_t d = 0; d < avg_count; ++d) ak = ak * avg_sizes[d] + stack[d];
            if (tail_mass.count(ak)) continue;  // handled above
            double bg = background_at(stack, mask) * case_mass[mask].sum / tail_total;
            for (const auto& [tk, mv] : tail_marg)
                out_cells.emplace_back(ak * tail_card + tk, 0.5 * bg * mv);
        }
    }

    std::sort(out_cells.begin(), out_cells.end());
    Distribution out;
    out.cardinality = target.cardinality;
    out.cells = std::move(out_cells);
    return out;
}

// ---------------------------------------------------------------------------
// Work-needed target exposure

// Per-document ideal exposure by work level: with the relevant documents
// sorted most-work-first, each level's documents share the mean discount of
// that level's contiguous rank slice.
struct WorkExposureProfile {
    std::vector<std::string> levels;     // most work first
    std::vector<std::size_t> counts;
    std::vector<double> exposures;       // NaN where the level is empty
    double total_exposure = 0.0;         // sum of discounts over all N ranks

    double exposure_for(std::size_t level_index) const { return exposures.at(level_index); }
};

inline WorkExposureProfile work_target_exposure(std::span<const std::size_t> counts,
                                                std::vector<std::string> levels = {}) {
    if (levels.empty()) levels.assign(kQualityLevels.begin(), kQualityLevels.end());
    if (counts.size() != levels.size())
        throw InvalidArgument("work_target_exposure: counts do not match the work-level order");
    std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total == 0) throw DegenerateTarget("work_target_exposure: no relevant documents");

    WorkExposureProfile profile;
    profile.levels = std::move(levels);
    profile.counts.assign(counts.begin(), counts.end());
    DiscountVector w = discount(total);
    detail::KahanSum everything;
    for (double x : w.weights) everything.add(x);
    profile.total_exposure = everything.sum;

    std::size_t start = 0;
    for (std::size_t cnt : counts) {
        if (cnt == 0) {
            profile.exposures.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        detail::KahanSum slice;
        for (std::size_t i = start; i < start + cnt; ++i) slice.add(w.weights[i]);
        profile.exposures.push_back(slice.sum / static_cast<double>(cnt));
        start += cnt;
    }
    return profile;
}

// A topic prepared for Task 2: pages with quality labels, their per-document
// target exposures, and the per-level profile. Pages lacking quality are
// dropped and reported.
struct Task2Topic {
    std::int64_t topic_id = 0;
    std::vector<std::size_t> rows;
    std::vector<double> weights;  // per-document target exposure
    WorkExposureProfile profile;
    std::vector<std::int64_t> dropped_missing_quality;
};

inline Task2Topic prepare_task2_topic(const AlignmentTable& align, const ResolvedTopic& topic) {
    Task2Topic t;
    t.topic_id = topic.topic_id;
    std::vector<std::pair<std::size_t, int>> with_quality;
    std::vector<std::size_t> counts(kQualityLevels.size(), 0);
    for (std::size_t row : topic.rows) {
        auto rank = align.work_rank(row);
        if (!rank) {
            t.dropped_missing_quality.push_back(align.pages()[row]);
            continue;
        }
        with_quality.emplace_back(row, *rank);
        ++counts[static_cast<std::size_t>(*rank)];
    }
    if (with_quality.empty())
        throw DegenerateTarget("topic " + std::to_string(topic.topic_id) +
                               ": no relevant documents with quality labels");
    t.profile = work_target_exposure(counts);
    for (const auto& [row, rank] : with_quality) {
        t.rows.push_back(row);
        t.weights.push_back(t.profile.exposure_for(static_cast<std::size_t>(rank)));
    }
    return t;
}

// ---------------------------------------------------------------------------
// Single-dimension targets

namespace detail {

// The halve-and-add step shared by both tasks: the known mass k is halved and
// 0.5*k*background is folded in; the unknown entry is untouched.
inline Distribution halve_and_add(const Distribution& dist, const DimensionSpec& dim) {
    std::size_t kb = dim.known_begin();
    detail::KahanSum known;
    for (const auto& [key, v] : dist.cells)
        if (key >= kb) known.add(v);
    Distribution out;
    out.cardinality = dist.cardinality;
    SparseAccumulator acc(dist.cardinality);
    for (const auto& [key, v] : dist.cells) acc.add(key, key >= kb ? 0.5 * v : v);
    for (std::size_t i = 0; i < dim.background.size(); ++i)
        acc.add(kb + i, 0.5 * known.sum * dim.background[i]);
    return acc.freeze();
}

inline Distribution weighted_row_sum(const AlignmentTable& align, std::span<const std::size_t> rows,
                                     std::span<const double> weights, std::size_t dim) {
    SparseAccumulator acc(align.space().dims[dim].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const auto& e : align.row(dim, rows[i]))
            acc.add(e.label, (weights.empty() ? 1.0 : weights[i]) * e.weight);
    return acc.freeze();
}

}  // namespace detail

// Task 1 target for one dimension: mean of relevant-page rows; averaged
// dimensions get the halve-and-add background treatment.
inline Distribution task1_dim_target(const ResolvedTopic& topic, const AlignmentTable& align,
                                     std::size_t dim) {
    if (topic.rows.empty())
        throw DegenerateTarget("topic " + std::to_string(topic.topic_id) + ": empty relevant set");
    const DimensionSpec& spec = align.space().dims[dim];
    Distribution sum = detail::weighted_row_sum(align, topic.rows, {}, dim);
    Distribution mean;
    mean.cardinality = sum.cardinality;
    for (const auto& [key, v] : sum.cells)
        mean.cells.emplace_back(key, v / static_cast<double>(topic.rows.size()));
    if (spec.has_background()) mean = detail::halve_and_add(mean, spec);
    return normalize(mean);
}

// Task 2 target for one dimension: exposure-weighted row sum, then the same
// background averaging; non-averaged unknown-capable dimensions drop the
// unknown column instead.
inline Distribution task2_dim_target(const Task2Topic& topic, const AlignmentTable& align,
                                     std::size_t dim) {
    const DimensionSpec& spec = align.space().dims[dim];
    Distribution sum = detail::weighted_row_sum(align, topic.rows, topic.weights, dim);
    if (spec.has_background()) {
        sum = detail::halve_and_add(sum, spec);
    } else if (spec.has_unknown()) {
        Distribution known;
        known.cardinality = sum.cardinality;
        for (const auto& [key, v] : sum.cells)
            if (key != 0) known.cells.emplace_back(key, v);
        sum = std::move(known);
    }
    if (sum.cells.empty())
        throw DegenerateTarget("topic " + std::to_string(topic.topic_id) + ": target for dimension '" +
                               spec.name + "' has no mass");
    return normalize(sum);
}

// ---------------------------------------------------------------------------
// Intersectional targets

namespace detail {
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_dims(
    const GroupSpace& space, std::span<const std::size_t> dims) {
    std::vector<std::size_t> avg, raw;
    for (std::size_t d : dims) {
        if (space.dims[d].has_background()) {
            if (!raw.empty())
                throw InvalidArgument("averaged dimensions must precede raw dimensions in the subset");
            avg.push_back(d);
        } else {
            raw.push_back(d);
        }
    }
    return {avg, raw};
}

inline std::vector<std::size_t> all_dims(const GroupSpace& space) {
    std::vector<std::size_t> idx(space.dims.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return idx;
}
}  // namespace detail

// Task 1 intersectional (or subset) target: mean outer product, background
// averaging, final renormalization to exactly 1.
inline Distribution task1_intersectional_target(const ResolvedTopic& topic, const AlignmentTable& align,
                                                std::span<const std::size_t> dims) {
    if (topic.rows.empty())
        throw DegenerateTarget("topic " + std::to_string(topic.topic_id) + ": empty relevant set");
    auto [avg_dims, raw_dims] = detail::split_dims(align.space(), dims);
    OuterFactors avg = make_factors(align, topic.rows, avg_dims);
    OuterFactors raw = make_factors(align, topic.rows, raw_dims);
    Distribution tgt = mean_outer(avg, raw);
    GroupSpace sub = align.space().subspace(dims);
    tgt = avg_with_bg(tgt, sub, avg_dims.size());
    return normalize(tgt);
}

// Task 2 intersectional target: exposure-weighted outer accumulation divided
// by the total exposure, then background averaging and renormalization.
inline Distribution task2_intersectional_target(const Task2Topic& topic, const AlignmentTable& align,
                                                std::span<const std::size_t> dims) {
    auto [avg_dims, raw_dims] = detail::split_dims(align.space(), dims);
    OuterFactors avg = make_factors(align, topic.rows, avg_dims, topic.weights);
    OuterFactors raw = make_factors(align, topic.rows, raw_dims);
    Distribution tgt = sum_outer(avg, raw);
    detail::KahanSum total;
    for (double w : topic.weights) total.add(w);
    if (total.sum <= 0.0) throw DegenerateTarget("topic has zero total target exposure");
    for (auto& [key, v] : tgt.cells) v /= total.sum;
    GroupSpace sub = align.space().subspace(dims);
    tgt = avg_with_bg(tgt, sub, avg_dims.size());
    return normalize(tgt);
}

// Raw exposure-scale group target over a dimension subset: A^T eps* without
// normalization or background averaging. This is the reference the ideal
// sequence fixtures converge to.
inline Distribution target_group_exposure(const Task2Topic& topic, const AlignmentTable& align,
                                          std::span<const std::size_t> dims) {
    auto [avg_dims, raw_dims] = detail::split_dims(align.space(), dims);
    OuterFactors avg = make_factors(align, topic.rows, avg_dims, topic.weights);
    OuterFactors raw = make_factors(align, topic.rows, raw_dims);
    return sum_outer(avg, raw);
}

}  // namespace fareval
