#pragma once

// Desk-scale synthetic corpora, run generators, and the dense brute-force
// oracle. The oracle materializes full tensors and mirrors the reference
// target procedure step by step; it shares no code with the sparse path it
// checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareval/alignment.hpp"
#include "fareval/core.hpp"
#include "fareval/errors.hpp"
#include "fareval/io_util.hpp"
#include "fareval/run_io.hpp"
#include "fareval/targets.hpp"

namespace fareval {

// ---------------------------------------------------------------------------
// Synthetic corpus specification

struct SynthSpec {
    std::uint64_t seed = 42;
    std::size_t page_count = 2000;
    // known-label counts for sub-geo, src-geo, occ (gender is fixed by the
    // collapse vocabulary; categoricals below)
    std::size_t sub_geo_labels = 4;
    std::size_t src_geo_labels = 4;
    std::size_t occ_labels = 5;
    std::array<std::size_t, 4> categorical_labels = {4, 4, 4, 3};  // alpha, age, pop, langs
    // unknown rates for sub-geo, src-geo, gender, occ (realized exactly)
    std::array<double, 4> unknown_rates = {0.3, 0.2, 0.5, 0.4};
    bool with_backgrounds = true;
    bool one_hot = false;            // single label everywhere (oracle fixtures)
    bool partition_topics = false;   // relevant sets are disjoint page blocks
    bool quality_round_robin = false;  // quality cycles Stub..FA by page index
    std::size_t topic_count = 50;
    std::size_t rel_min = 30;
    std::size_t rel_max = 80;
    std::vector<double> quality_weights = {0.35, 0.25, 0.2, 0.12, 0.05, 0.03};  // Stub..FA
    std::size_t task1_length = 500;
    std::size_t task2_length = 20;
    std::size_t task2_rankings = 100;

    std::uint64_t cardinality() const {
        std::uint64_t c = (sub_geo_labels + 1) * (src_geo_labels + 1) * 4 * (occ_labels + 1);
        for (std::size_t n : categorical_labels) c *= n;
        return c;
    }
};

struct SynthCorpus {
    GroupSpace registry;
    std::vector<PageRecord> pages;
    std::vector<Qrels> qrels;
    std::vector<TopicFile> topics;
};

namespace detail {

// Deterministic shuffle; std::shuffle's draw sequence is not pinned down by
// the standard, this one is.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline std::vector<double> random_simplex(std::size_t n, std::mt19937_64& rng) {
    std::vector<double> v(n);
    double total = 0.0;
    for (auto& x : v) {
        x = 0.05 + static_cast<double>(rng() % 1000) / 1000.0;
        total += x;
    }
    for (auto& x : v) x /= total;
    return v;
}

inline std::vector<std::string> make_labels(const std::string& prefix, std::size_t n) {
    std::vector<std::string> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(prefix + std::to_string(i + 1));
    return labels;
}

}  // namespace detail

inline SynthSpec validate_synth_spec(SynthSpec spec) {
    if (spec.cardinality() > 1000000)
        throw InvalidArgument("synthetic space has " + std::to_string(spec.cardinality()) +
                              " cells; the dense oracle budget is 1e6");
    if (spec.page_count == 0 || spec.topic_count == 0)
        throw InvalidArgument("synthetic spec needs pages and topics");
    if (spec.rel_min == 0 || spec.rel_min > spec.rel_max || spec.rel_max > spec.page_count)
        throw InvalidArgument("bad relevant-set size range");
    if (spec.quality_weights.size() != kQualityLevels.size())
        throw InvalidArgument("quality distribution needs 6 weights");
    return spec;
}

// Builds the desk-scale registry for a spec. Dimension order matches the page
// schema, averaged dimensions first.
inline GroupSpace synth_registry(const SynthSpec& spec, std::mt19937_64& rng) {
    GroupSpace space;
    auto add_dim = [&](const std::string& name, std::vector<std::string> known, bool unknown,
                       bool background) {
        DimensionSpec d;
        d.name = name;
        if (unknown) {
            d.unknown_index = 0;
            d.labels.push_back(std::string(kUnknownLabel));
        }
        for (auto& l : known) d.labels.push_back(std::move(l));
        if (background) d.background = detail::random_simplex(d.known_count(), rng);
        space.dims.push_back(std::move(d));
    };
    bool bg = spec.with_backgrounds;
    add_dim("sub-geo", detail::make_labels("Region ", spec.sub_geo_labels), true, bg);
    add_dim("src-geo", detail::make_labels("Source ", spec.src_geo_labels), true, bg);
    if (bg) {
        DimensionSpec d;
        d.name = "gender";
        d.unknown_index = 0;
        d.labels = {std::string(kUnknownLabel), "female", "male", "NB"};
        d.background = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
        space.dims.push_back(std::move(d));
    } else {
        add_dim("gender", {"female", "male", "NB"}, true, false);
    }
    add_dim("occ", detail::make_labels("occ ", spec.occ_labels), true, false);
    add_dim("alpha", detail::make_labels("alpha ", spec.categorical_labels[0]), false, false);
    add_dim("age", detail::make_labels("age ", spec.categorical_labels[1]), false, false);
    add_dim("pop", detail::make_labels("pop ", spec.categorical_labels[2]), false, false);
    add_dim("langs", detail::make_labels("langs ", spec.categorical_labels[3]), false, false);
    space.validate();
    return space;
}

// Deterministic synthetic corpus: pages, topics, and qrels. Unknown rates are
// realized exactly (round(rate * n) pages per dimension).
inline SynthCorpus gen_corpus(const SynthSpec& spec_in) {
    SynthSpec spec = validate_synth_spec(spec_in);
    std::mt19937_64 rng(spec.seed);
    SynthCorpus corpus;
    corpus.registry = synth_registry(spec, rng);

    const std::size_t n = spec.page_count;
    auto unknown_mask = [&](double rate) {
        std::vector<bool> mask(n, false);
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        detail::shuffle(idx, rng);
        std::size_t k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
        for (std::size_t i = 0; i < std::min(k, n); ++i) mask[idx[i]] = true;
        return mask;
    };
    std::array<std::vector<bool>, 4> unk;
    for (std::size_t d = 0; d < 4; ++d) unk[d] = unknown_mask(spec.unknown_rates[d]);

    const std::vector<std::string> raw_genders = {
        "male", "female", "transgender female", "transgender male", "cisgender female",
        "non-binary", "intersex", "genderqueer"};

    auto pick_quality = [&]() {
        double total = std::accumulate(spec.quality_weights.begin(), spec.quality_weights.end(), 0.0);
        double x = (static_cast<double>(rng() % 1000000) / 1000000.0) * total;
        for (std::size_t i = 0; i < spec.quality_weights.size(); ++i) {
            x -= spec.quality_weights[i];
            if (x <= 0.0) return std::string(kQualityLevels[i]);
        }
        return std::string(kQualityLevels.back());
    };

    auto known_labels = [&](const DimensionSpec& d) {
        return std::vector<std::string>(d.labels.begin() + d.known_begin(), d.labels.end());
    };
    auto sub_geo_pool = known_labels(corpus.registry.dims[0]);
    auto src_geo_pool = known_labels(corpus.registry.dims[1]);
    auto occ_pool = known_labels(corpus.registry.dims[3]);

    for (std::size_t p = 0; p < n; ++p) {
        PageRecord rec;
        rec.page_id = static_cast<std::int64_t>(1000 + p);
        std::size_t max_multi = spec.one_hot ? 1 : 3;
        if (!unk[0][p]) {
            std::size_t k = 1 + rng() % std::min(max_multi, sub_geo_pool.size());
            auto pool = sub_geo_pool;
            detail::shuffle(pool, rng);
            rec.sub_geo.assign(pool.begin(), pool.begin() + k);
        }
        if (!unk[1][p]) {
            std::size_t k = 1 + rng() % std::min(max_multi, src_geo_pool.size());
            auto pool = src_geo_pool;
            detail::shuffle(pool, rng);
            for (std::size_t i = 0; i < k; ++i)
                rec.src_geo.emplace_back(pool[i], static_cast<double>(1 + rng() % 200));
            if (!spec.one_hot && spec.unknown_rates[1] > 0.0 && rng() % 4 == 0)
                rec.src_geo.emplace_back("UNK", static_cast<double>(1 + rng() % 50));
        }
        if (!unk[2][p]) rec.gender.push_back(raw_genders[rng() % raw_genders.size()]);
        if (!unk[3][p]) {
            std::size_t k = 1 + rng() % std::min(max_multi, occ_pool.size());
            auto pool = occ_pool;
            detail::shuffle(pool, rng);
            rec.occupations.assign(pool.begin(), pool.begin() + k);
        }
        rec.first_letter_category = corpus.registry.dims[4].labels[rng() % spec.categorical_labels[0]];
        rec.creation_date_category = corpus.registry.dims[5].labels[rng() % spec.categorical_labels[1]];
        rec.relative_pageviews_category = corpus.registry.dims[6].labels[rng() % spec.categorical_labels[2]];
        rec.num_sitelinks_category = corpus.registry.dims[7].labels[rng() % spec.categorical_labels[3]];
        rec.quality = spec.quality_round_robin ? std::string(kQualityLevels[p % kQualityLevels.size()])
                                               : pick_quality();
        corpus.pages.push_back(std::move(rec));
    }

    if (spec.partition_topics && (spec.rel_min != spec.rel_max || spec.rel_min * spec.topic_count > n))
        throw InvalidArgument("partitioned topics need rel_min == rel_max and enough pages");

    for (std::size_t t = 0; t < spec.topic_count; ++t) {
        std::size_t rel = spec.rel_min + (spec.rel_max > spec.rel_min
                                              ? rng() % (spec.rel_max - spec.rel_min + 1)
                                              : 0);
        std::vector<std::size_t> idx;
        if (spec.partition_topics) {
            for (std::size_t i = 0; i < rel; ++i) idx.push_back(t * rel + i);
        } else {
            idx.resize(n);
            std::iota(idx.begin(), idx.end(), std::size_t{0});
            detail::shuffle(idx, rng);
        }
        Qrels q;
        q.topic_id = static_cast<std::int64_t>(100 + t);
        for (std::size_t i = 0; i < rel; ++i) q.pages.push_back(corpus.pages[idx[i]].page_id);
        std::sort(q.pages.begin(), q.pages.end());
        TopicFile topic;
        topic.id = q.topic_id;
        topic.title = "synthetic topic " + std::to_string(q.topic_id);
        topic.keywords = {"synthetic", "topic", std::to_string(q.topic_id)};
        topic.rel_docs = q.pages;
        corpus.topics.push_back(std::move(topic));
        corpus.qrels.push_back(std::move(q));
    }
    return corpus;
}

inline void write_corpus_jsonl(const SynthCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (const auto& rec : corpus.pages) {
        nlohmann::json j;
        j["page_id"] = rec.page_id;
        j["page_subcont_regions"] = rec.sub_geo;
        nlohmann::json src = nlohmann::json::object();
        for (const auto& [k, v] : rec.src_geo) src[k] = v;
        j["source_subcont_regions"] = src;
        j["gender"] = rec.gender;
        j["occupations"] = rec.occupations;
        j["first_letter_category"] = rec.first_letter_category;
        j["creation_date_category"] = rec.creation_date_category;
        j["relative_pageviews_category"] = rec.relative_pageviews_category;
        j["num_sitelinks_category"] = rec.num_sitelinks_category;
        j["qual_cat"] = rec.quality;
        out << j.dump() << '\n';
    }
}

inline void write_topics_jsonl(const SynthCorpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    for (const auto& t : corpus.topics) {
        nlohmann::json j;
        j["id"] = t.id;
        j["title"] = t.title;
        j["keywords"] = t.keywords;
        j["rel_docs"] = t.rel_docs;
        j["homepage"] = "";
        out << j.dump() << '\n';
    }
}

inline void write_registry_json(const GroupSpace& space, const std::string& path) {
    nlohmann::json dims = nlohmann::json::array();
    for (const auto& d : space.dims) {
        nlohmann::json jd;
        jd["name"] = d.name;
        jd["labels"] = d.labels;
        if (d.has_unknown()) jd["unknown"] = true;
        if (d.has_background()) {
            nlohmann::json bg = nlohmann::json::object();
            for (std::size_t i = 0; i < d.background.size(); ++i)
                bg[d.labels[d.known_begin() + i]] = d.background[i];
            jd["background"] = bg;
        }
        dims.push_back(std::move(jd));
    }
    nlohmann::json j;
    j["dimensions"] = std::move(dims);
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Run generators

// Relevant rows sorted most-work-first; ties broken by page id.
inline std::vector<std::size_t> work_sorted_rows(const AlignmentTable& align, const Task2Topic& topic) {
    std::vector<std::size_t> rows = topic.rows;
    std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
        int wa = *align.work_rank(a), wb = *align.work_rank(b);
        if (wa != wb) return wa < wb;
        return align.pages()[a] < align.pages()[b];
    });
    return rows;
}

// Sequence of full-length rankings ordered most-work-first, rotating within
// each work bin so per-document exposure converges to the bin slice mean.
// With count a multiple of every bin size the match is exact.
inline RankingSequence gen_ideal_sequence(const AlignmentTable& align, const Task2Topic& topic,
                                          std::size_t count, bool reversed = false) {
    if (count == 0) throw InvalidArgument("gen_ideal_sequence: count must be positive");
    std::vector<std::size_t> rows = work_sorted_rows(align, topic);

    // contiguous bins by work rank
    std::vector<std::pair<std::size_t, std::size_t>> bins;  // [begin, end)
    std::size_t begin = 0;
    for (std::size_t i = 1; i <= rows.size(); ++i) {
        if (i == rows.size() || *align.work_rank(rows[i]) != *align.work_rank(rows[begin])) {
            bins.emplace_back(begin, i);
            begin = i;
        }
    }
    if (reversed) {
        std::reverse(rows.begin(), rows.end());
        std::vector<std::pair<std::size_t, std::size_t>> rbins;
        for (auto it = bins.rbegin(); it != bins.rend(); ++it)
            rbins.emplace_back(rows.size() - it->second, rows.size() - it->first);
        bins = std::move(rbins);
    }

    RankingSequence seq;
    seq.topic_id = topic.topic_id;
    for (std::size_t r = 0; r < count; ++r) {
        Ranking ranking;
        ranking.topic_id = topic.topic_id;
        ranking.pages.reserve(rows.size());
        for (const auto& [b, e] : bins) {
            std::size_t size = e - b;
            for (std::size_t j = 0; j < size; ++j)
                ranking.pages.push_back(align.pages()[rows[b + (j + r) % size]]);
        }
        seq.rankings.push_back(std::move(ranking));
    }
    return seq;
}

// Task 1 rankings.
inline Ranking gen_ideal_ranking(const AlignmentTable& align, const Task2Topic& topic,
                                 std::span<const std::int64_t> fill_pool, std::size_t length) {
    Ranking r;
    r.topic_id = topic.topic_id;
    for (std::size_t row : work_sorted_rows(align, topic)) {
        if (r.pages.size() >= length) break;
        r.pages.push_back(align.pages()[row]);
    }
    std::unordered_set<std::int64_t> used(r.pages.begin(), r.pages.end());
    for (std::int64_t p : fill_pool) {
        if (r.pages.size() >= length) break;
        if (used.insert(p).second) r.pages.push_back(p);
    }
    return r;
}

inline Ranking gen_random_ranking(const AlignmentTable& align, std::int64_t topic_id, std::size_t length,
                                  std::mt19937_64& rng) {
    std::vector<std::int64_t> pool = align.pages();
    detail::shuffle(pool, rng);
    Ranking r;
    r.topic_id = topic_id;
    for (std::size_t i = 0; i < std::min(length, pool.size()); ++i) r.pages.push_back(pool[i]);
    return r;
}

// ---------------------------------------------------------------------------
// Dense brute-force oracle

// Reference semantics for the sparse target pipeline: materializes the full
// per-page outer-product tensor and applies the case-by-case background
// averaging by direct sub-tensor slicing. Exact accumulation order (ascending
// index, pages in the given order).
class DenseOracle {
  public:
    static constexpr std::uint64_t kSizeBudget = 1000000;

    DenseOracle(const AlignmentTable& align, std::vector<std::size_t> dims)
        : align_(align), dims_(std::move(dims)) {
        for (std::size_t d : dims_) sizes_.push_back(align.space().dims[d].size());
        card_ = 1;
        for (std::uint64_t s : sizes_) card_ *= s;
        if (card_ > kSizeBudget)
            throw InvalidArgument("dense oracle refused: " + std::to_string(card_) + " cells");
    }

    // Mean (weights empty) or weighted sum of per-page dense outer products.
    std::vector<double> accumulate(std::span<const std::size_t> rows,
                                   std::span<const double> weights) const {
        std::vector<double> total(card_, 0.0);
        std::vector<double> page_tensor;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            dense_page_tensor(rows[i], page_tensor);
            double w = weights.empty() ? 1.0 / static_cast<double>(rows.size()) : weights[i];
            for (std::uint64_t c = 0; c < card_; ++c) total[c] += page_tensor[c] * w;
        }
        return total;
    }

    // Literal dense translation of the background-averaging procedure.
    std::vector<double> average_with_background(std::vector<double> tensor,
                                                std::size_t avg_count) const {
        if (avg_count == 0) return tensor;
        std::uint64_t avg_card = 1, tail_card = 1;
        for (std::size_t i = 0; i < avg_count; ++i) avg_card *= sizes_[i];
        for (std::size_t i = avg_count; i < sizes_.size(); ++i) tail_card *= sizes_[i];

        std::vector<double> tail_mass(avg_card, 0.0), tail_marg(tail_card, 0.0);
        for (std::uint64_t a = 0; a < avg_card; ++a)
            for (std::uint64_t t = 0; t < tail_card; ++t) {
                tail_mass[a] += tensor[a * tail_card + t];
                tail_marg[t] += tensor[a * tail_card + t];
            }
        double marg_total = std::accumulate(tail_marg.begin(), tail_marg.end(), 0.0);

        // impute the marginal tail profile where a coordinate has no mass
        std::vector<double> scale(card_, 0.0);
        for (std::uint64_t a = 0; a < avg_card; ++a) {
            if (tail_mass[a] > 0.0) {
                for (std::uint64_t t = 0; t < tail_card; ++t)
                    scale[a * tail_card + t] = tensor[a * tail_card + t] / tail_mass[a];
            } else {
                for (std::uint64_t t = 0; t < tail_card; ++t)
                    scale[a * tail_card + t] = tail_marg[t] / marg_total;
            }
        }

        // known/unknown cases, all-unknown excluded
        std::vector<std::vector<bool>> cases;
        for (std::uint64_t m = (1ull << avg_count); m-- > 1;) {
            std::vector<bool> c(avg_count);
            bool ok = true;
            for (std::size_t d = 0; d < avg_count; ++d) {
                c[d] = m & (1ull << (avg_count - 1 - d));
                if (!c[d] && !align_.space().dims[dims_[d]].has_unknown()) ok = false;
            }
            if (ok) cases.push_back(std::move(c));
        }

        std::vector<std::uint64_t> coords(avg_count);
        for (const auto& known : cases) {
            auto in_case = [&](std::uint64_t a) {
                std::uint64_t rem = a;
                for (std::size_t d = avg_count; d-- > 0;) {
                    coords[d] = rem % sizes_[d];
                    rem /= sizes_[d];
                }
                for (std::size_t d = 0; d < avg_count; ++d) {
                    const auto& dim = align_.space().dims[dims_[d]];
                    bool coord_known = !dim.has_unknown() || coords[d] != 0;
                    if (coord_known != known[d]) return false;
                }
                return true;
            };
            double c_sum = 0.0;
            for (std::uint64_t a = 0; a < avg_card; ++a)
                if (in_case(a))
                    for (std::uint64_t t = 0; t < tail_card; ++t) c_sum += tensor[a * tail_card + t];
            for (std::uint64_t a = 0; a < avg_card; ++a) {
                if (!in_case(a)) continue;  // leaves `coords` holding a's digits
                double bg = 1.0;
                for (std::size_t d = 0; d < avg_count; ++d) {
                    if (!known[d]) continue;
                    const auto& dim = align_.space().dims[dims_[d]];
                    bg *= dim.background[coords[d] - dim.known_begin()];
                }
                for (std::uint64_t t = 0; t < tail_card; ++t) {
                    std::uint64_t cell = a * tail_card + t;
                    tensor[cell] = 0.5 * tensor[cell] + 0.5 * bg * scale[cell] * c_sum;
                }
            }
        }
        return tensor;
    }

    std::vector<double> normalized(std::vector<double> tensor) const {
        double total = std::accumulate(tensor.begin(), tensor.end(), 0.0);
        if (total <= 0.0) throw DegenerateDistribution("oracle tensor has no mass");
        for (auto& v : tensor) v /= total;
        return tensor;
    }

    std::uint64_t cardinality() const { return card_; }

    // Full reference pipeline: accumulate, average, normalize.
    std::vector<double> target(std::span<const std::size_t> rows, std::span<const double> weights,
                               std::size_t avg_count) const {
        std::vector<double> t = accumulate(rows, weights);
        if (!weights.empty()) {
            double total = std::accumulate(weights.begin(), weights.end(), 0.0);
            for (auto& v : t) v /= total;
        }
        t = average_with_background(std::move(t), avg_count);
        return normalized(std::move(t));
    }

  private:
    void dense_page_tensor(std::size_t row, std::vector<double>& out) const {
        out.assign(1, 1.0);
        std::vector<double> next;
        for (std::size_t i = 0; i < dims_.size(); ++i) {
            auto r = align_.row(dims_[i], row);
            std::vector<double> dense_row(sizes_[i], 0.0);
            for (const auto& e : r) dense_row[e.label] = e.weight;
            next.assign(out.size() * sizes_[i], 0.0);
            for (std::size_t a = 0; a < out.size(); ++a)
                for (std::uint64_t b = 0; b < sizes_[i]; ++b) next[a * sizes_[i] + b] = out[a] * dense_row[b];
            out.swap(next);
        }
    }

    const AlignmentTable& align_;
    std::vector<std::size_t> dims_;
    std::vector<std::uint64_t> sizes_;
    std::uint64_t card_ = 1;
};

// Reference target for tests: dense mean/weighted pipeline over a dimension
// subset of the table's space.
inline std::vector<double> dense_target_oracle(const AlignmentTable& align,
                                               std::span<const std::size_t> rows,
                                               std::vector<std::size_t> dims,
                                               std::span<const double> weights, std::size_t avg_count) {
    DenseOracle oracle(align, std::move(dims));
    return oracle.target(rows, weights, avg_count);
}

}  // namespace fareval
