#pragma once

// Domain types shared by the whole toolkit: fairness dimensions, the
// intersectional group space, sparse distributions over it, the position
// discount, and the Jensen-Shannon divergence.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fareval/errors.hpp"

namespace fareval {

inline constexpr std::string_view kUnknownLabel = "@UNKNOWN";

// ---------------------------------------------------------------------------
// Dimensions and the group space

struct DimensionSpec {
    std::string name;
    // Full ordered label set. When an unknown slot exists it is label 0.
    std::vector<std::string> labels;
    std::optional<std::size_t> unknown_index;
    // Background distribution over the *known* labels only (empty if none).
    // A dimension with a background is an "averaged" dimension.
    std::vector<double> background;

    bool has_unknown() const { return unknown_index.has_value(); }
    bool has_background() const { return !background.empty(); }
    std::size_t size() const { return labels.size(); }
    std::size_t known_count() const { return labels.size() - (has_unknown() ? 1 : 0); }
    // Index of the first known label (0 or 1).
    std::size_t known_begin() const { return has_unknown() ? 1 : 0; }

    std::optional<std::size_t> label_index(std::string_view label) const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return i;
        return std::nullopt;
    }

    void validate() const {
        if (labels.empty()) throw ConfigError("dimension '" + name + "' has no labels");
        for (const auto& l : labels) {
            if (l.empty()) throw ConfigError("dimension '" + name + "' has an empty label");
            // labels appear in CSV/TSV table headers
            if (l.find_first_of(",\t\n\r") != std::string::npos)
                throw ConfigError("dimension '" + name + "': label '" + l + "' contains a separator");
            if (std::count(labels.begin(), labels.end(), l) != 1)
                throw ConfigError("dimension '" + name + "' has duplicate label '" + l + "'");
        }
        if (unknown_index && *unknown_index != 0)
            throw ConfigError("dimension '" + name + "': unknown slot must be index 0");
        if (!background.empty()) {
            if (background.size() != known_count())
                throw ConfigError("dimension '" + name + "': background must cover exactly the known labels");
            double sum = 0.0;
            for (double v : background) {
                if (v < 0.0) throw ConfigError("dimension '" + name + "': negative background weight");
                sum += v;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ConfigError("dimension '" + name + "': background sums to " + std::to_string(sum) + ", expected 1");
        }
    }
};

// Ordered set of dimensions with row-major flattening. Averaged dimensions
// (those carrying a background) must occupy the leading positions; the
// intersectional target averaging depends on that ordering.
struct GroupSpace {
    std::vector<DimensionSpec> dims;

    std::uint64_t cardinality() const {
        std::uint64_t card = 1;
        for (const auto& d : dims) card *= static_cast<std::uint64_t>(d.size());
        return card;
    }

    std::vector<std::uint64_t> strides() const {
        std::vector<std::uint64_t> s(dims.size(), 1);
        for (std::size_t i = dims.size(); i-- > 1;) s[i - 1] = s[i] * dims[i].size();
        return s;
    }

    std::size_t averaged_count() const {
        std::size_t n = 0;
        while (n < dims.size() && dims[n].has_background()) ++n;
        return n;
    }

    void validate() const {
        if (dims.empty()) throw ConfigError("group space has no dimensions");
        for (const auto& d : dims) d.validate();
        // averaged-first ordering is load-bearing, fail fast instead of reordering
        bool seen_raw = false;
        for (const auto& d : dims) {
            if (d.has_background() && seen_raw)
                throw ConfigError("averaged dimension '" + d.name +
                                  "' appears after a non-averaged dimension; averaged dimensions must come first");
            if (!d.has_background()) seen_raw = true;
        }
        for (std::size_t i = 0; i < dims.size(); ++i)
            for (std::size_t j = i + 1; j < dims.size(); ++j)
                if (dims[i].name == dims[j].name)
                    throw ConfigError("duplicate dimension name '" + dims[i].name + "'");
    }

    std::optional<std::size_t> dim_index(std::string_view name) const {
        for (std::size_t i = 0; i < dims.size(); ++i)
            if (dims[i].name == name) return i;
        return std::nullopt;
    }

    // Sub-space over a subset of dimensions, kept in registry order.
    GroupSpace subspace(std::span<const std::size_t> indices) const {
        GroupSpace sub;
        for (std::size_t i : indices) sub.dims.push_back(dims.at(i));
        return sub;
    }
};

// ---------------------------------------------------------------------------
// Quality levels

// Ordinal article quality, lowest first. work_rank(label) == position in this
// list: rank 0 needs the most work.
inline constexpr std::array<std::string_view, 6> kQualityLevels = {"Stub", "Start", "C",
                                                                   "B",    "GA",    "FA"};

inline std::optional<int> try_quality_work_rank(std::string_view label) {
    for (std::size_t i = 0; i < kQualityLevels.size(); ++i)
        if (kQualityLevels[i] == label) return static_cast<int>(i);
    return std::nullopt;
}

inline int quality_work_rank(std::string_view label) {
    if (auto r = try_quality_work_rank(label)) return *r;
    throw InvalidArgument("unknown quality label '" + std::string(label) + "'");
}

// ---------------------------------------------------------------------------
// Position discount

// w_i = 1 / log2(max(i, 2)), 1-based.
inline double position_discount(std::size_t rank) {
    return 1.0 / std::log2(static_cast<double>(std::max<std::size_t>(rank, 2)));
}

struct DiscountVector {
    std::vector<double> weights;  // weights[i] is position i+1
    std::size_t size() const { return weights.size(); }
    double operator[](std::size_t i) const { return weights[i]; }
};

inline DiscountVector discount(std::size_t n) {
    if (n == 0) throw InvalidArgument("discount(): n must be >= 1");
    DiscountVector d;
    d.weights.resize(n);
    for (std::size_t i = 0; i < n; ++i) d.weights[i] = position_discount(i + 1);
    return d;
}

// ---------------------------------------------------------------------------
// Sparse distributions

namespace detail {
// Compensated (Kahan) accumulator; keeps mass checks meaningful on large cells.
struct KahanSum {
    double sum = 0.0;
    double carry = 0.0;
    void add(double v) {
        double y = v - carry;
        double t = sum + y;
        carry = (t - sum) - y;
        sum = t;
    }
};
}  // namespace detail

// Sparse non-negative weights over a flattened group space; absent keys are
// exactly zero. Cells are kept sorted by key so that downstream computations
// are deterministic.
struct Distribution {
    std::uint64_t cardinality = 0;
    std::vector<std::pair<std::uint64_t, double>> cells;  // sorted by key, no zeros

    double sum() const {
        detail::KahanSum k;
        for (const auto& [key, v] : cells) k.add(v);
        return k.sum;
    }

    double value(std::uint64_t key) const {
        auto it = std::lower_bound(cells.begin(), cells.end(), key,
                                   [](const auto& c, std::uint64_t k) { return c.first < k; });
        return (it != cells.end() && it->first == key) ? it->second : 0.0;
    }

    bool is_normalized(double tol = 1e-9) const { return std::abs(sum() - 1.0) <= tol; }
};

// Accumulates weight into cells; dense storage under a configurable
// cardinality threshold, hashed otherwise. freeze() produces the canonical
// sorted form either way.
class SparseAccumulator {
  public:
    static constexpr std::uint64_t kDenseThreshold = 10000;

    explicit SparseAccumulator(std::uint64_t cardinality, std::uint64_t dense_threshold = kDenseThreshold)
        : cardinality_(cardinality), dense_(cardinality <= dense_threshold) {
        if (dense_) dense_cells_.assign(static_cast<std::size_t>(cardinality), 0.0);
    }

    std::uint64_t cardinality() const { return cardinality_; }

    void add(std::uint64_t key, double v) {
        if (key >= cardinality_) throw InternalError("accumulator key out of range");
        if (v == 0.0) return;
        if (dense_)
            dense_cells_[static_cast<std::size_t>(key)] += v;
        else
            sparse_cells_[key] += v;
    }

    Distribution freeze() const {
        Distribution d;
        d.cardinality = cardinality_;
        if (dense_) {
            for (std::size_t i = 0; i < dense_cells_.size(); ++i)
                if (dense_cells_[i] != 0.0) d.cells.emplace_back(i, dense_cells_[i]);
        } else {
            d.cells.assign(sparse_cells_.begin(), sparse_cells_.end());
            std::sort(d.cells.begin(), d.cells.end());
        }
        for (const auto& [key, v] : d.cells)
            if (v < 0.0) throw InternalError("negative weight in distribution cell");
        return d;
    }

  private:
    std::uint64_t cardinality_;
    bool dense_;
    std::vector<double> dense_cells_;
    std::unordered_map<std::uint64_t, double> sparse_cells_;
};

inline Distribution normalize(const Distribution& d) {
    double total = d.sum();
    if (total <= 0.0) throw DegenerateDistribution("cannot normalize an all-zero distribution");
    Distribution out;
    out.cardinality = d.cardinality;
    out.cells.reserve(d.cells.size());
    for (const auto& [key, v] : d.cells) out.cells.emplace_back(key, v / total);
    return out;
}

// Base-2 Jensen-Shannon divergence between two normalized distributions over
// the same space; the result lies in [0, 1]. Cells where p_i = 0 contribute 0.
inline double js_divergence(const Distribution& p, const Distribution& q) {
    if (p.cardinality != q.cardinality)
        throw InvalidArgument("js_divergence: distributions live on different spaces");
    if (std::abs(p.sum() - 1.0) > 1e-6 || std::abs(q.sum() - 1.0) > 1e-6)
        throw InvalidArgument("js_divergence: inputs must be normalized");

    detail::KahanSum acc;
    auto term = [&acc](double a, double m) {
        if (a > 0.0) acc.add(0.5 * a * std::log2(a / m));
    };
    std::size_t i = 0, j = 0;
    while (i < p.cells.size() || j < q.cells.size()) {
        std::uint64_t kp = i < p.cells.size() ? p.cells[i].first : UINT64_MAX;
        std::uint64_t kq = j < q.cells.size() ? q.cells[j].first : UINT64_MAX;
        double pv = 0.0, qv = 0.0;
        if (kp <= kq) pv = p.cells[i++].second;
        if (kq <= kp) qv = q.cells[j++].second;
        double m = 0.5 * (pv + qv);
        term(pv, m);
        term(qv, m);
    }
    // guard the [0,1] bound against rounding
    return std::min(1.0, std::max(0.0, acc.sum));
}

}  // namespace fareval
