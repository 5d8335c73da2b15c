#pragma once

// Page alignment construction: turn raw page-attribute records into
// per-dimension multinomial rows, applying the Oceania collapse, gender
// collapse, unknown handling, and row normalization.

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "fareval/core.hpp"
#include "fareval/errors.hpp"
#include "fareval/io_util.hpp"

namespace fareval {

// Raw attributes of one page, field names per the metadata schema.
struct PageRecord {
    std::int64_t page_id = 0;
    std::vector<std::string> sub_geo;                        // page_subcont_regions
    std::vector<std::pair<std::string, double>> src_geo;     // source_subcont_regions
    std::vector<std::string> gender;
    std::vector<std::string> occupations;
    std::string first_letter_category;
    std::string creation_date_category;
    std::string relative_pageviews_category;
    std::string num_sitelinks_category;
    std::string quality;                                     // qual_cat
};

// The four Oceania subregions folded into a single "Oceania" label.
inline constexpr std::array<std::string_view, 4> kOceaniaRegions = {
    "Australia and New Zealand", "Melanesia", "Micronesia", "Polynesia"};

// Replaces Oceania subregions with one "Oceania" entry carrying their summed
// weight. Unrecognized labels pass through untouched.
inline std::map<std::string, double> collapse_oceania(const std::map<std::string, double>& geo) {
    std::map<std::string, double> out;
    double ocean = 0.0;
    for (const auto& [label, count] : geo) {
        if (std::find(kOceaniaRegions.begin(), kOceaniaRegions.end(), label) != kOceaniaRegions.end())
            ocean += count;
        else
            out[label] += count;
    }
    if (ocean > 0.0) out["Oceania"] += ocean;
    return out;
}

// Collapses a raw gender label: trans/cis prefixes are dropped, everything
// else outside {female, male} becomes "NB". Empty input means unknown.
inline std::string collapse_gender(std::string_view raw) {
    if (raw.empty()) return std::string(kUnknownLabel);
    if (raw == "male" || raw == "transgender male" || raw == "cisgender male") return "male";
    if (raw == "female" || raw == "transgender female" || raw == "cisgender female") return "female";
    return "NB";
}

// ---------------------------------------------------------------------------
// Alignment table

// Per-page, per-dimension membership rows. Every row sums to 1; for
// unknown-capable dimensions a page with no known membership has weight 1 at
// the unknown label. Immutable once built.
class AlignmentTable {
  public:
    struct Entry {
        std::uint32_t label;
        double weight;
    };

    AlignmentTable() = default;
    AlignmentTable(GroupSpace space, std::vector<std::int64_t> pages,
                   std::vector<std::vector<std::uint64_t>> offsets,
                   std::vector<std::vector<Entry>> entries, std::vector<std::int8_t> quality)
        : space_(std::move(space)),
          pages_(std::move(pages)),
          offsets_(std::move(offsets)),
          entries_(std::move(entries)),
          quality_(std::move(quality)) {
        for (std::size_t i = 0; i < pages_.size(); ++i) page_index_[pages_[i]] = i;
    }

    const GroupSpace& space() const { return space_; }
    std::size_t page_count() const { return pages_.size(); }
    const std::vector<std::int64_t>& pages() const { return pages_; }

    std::optional<std::size_t> row_of(std::int64_t page_id) const {
        auto it = page_index_.find(page_id);
        if (it == page_index_.end()) return std::nullopt;
        return it->second;
    }

    std::span<const Entry> row(std::size_t dim, std::size_t row_index) const {
        const auto& off = offsets_[dim];
        return {entries_[dim].data() + off[row_index],
                static_cast<std::size_t>(off[row_index + 1] - off[row_index])};
    }

    // Work rank of the page's quality label, or nullopt when missing.
    std::optional<int> work_rank(std::size_t row_index) const {
        std::int8_t q = quality_[row_index];
        if (q < 0) return std::nullopt;
        return static_cast<int>(q);
    }

    // Mean weight on the unknown label, per dimension (1.0 = all unknown).
    double unknown_rate(std::size_t dim) const {
        if (!space_.dims[dim].has_unknown() || pages_.empty()) return 0.0;
        double total = 0.0;
        for (std::size_t r = 0; r < pages_.size(); ++r)
            for (const auto& e : row(dim, r))
                if (e.label == 0) total += e.weight;
        return total / static_cast<double>(pages_.size());
    }

    void save(const std::string& path) const;
    static AlignmentTable load(const std::string& path);
    void save_csv(const std::string& directory) const;

  private:
    GroupSpace space_;
    std::vector<std::int64_t> pages_;                     // sorted ascending
    std::vector<std::vector<std::uint64_t>> offsets_;     // per dim, size pages+1
    std::vector<std::vector<Entry>> entries_;             // per dim, CSR payload
    std::vector<std::int8_t> quality_;                    // work rank, -1 = missing
    std::unordered_map<std::int64_t, std::size_t> page_index_;
};

struct BuildStats {
    std::size_t lines = 0;
    std::size_t pages = 0;
    std::size_t duplicate_pages = 0;
    std::size_t malformed_lines = 0;
    std::size_t rejected_records = 0;  // unknown categorical labels etc.
    std::vector<std::string> sample_errors;

    void note_error(const std::string& msg) {
        if (sample_errors.size() < 20) sample_errors.push_back(msg);
    }
};

struct BuildOptions {
    // Build aborts when more than this fraction of lines is malformed.
    double malformed_threshold = 0.001;
};

namespace detail {

struct RowBuilder {
    std::vector<std::vector<std::uint64_t>> offsets;
    std::vector<std::vector<AlignmentTable::Entry>> entries;

    explicit RowBuilder(std::size_t dims) : offsets(dims), entries(dims) {
        for (auto& o : offsets) o.push_back(0);
    }

    // Appends a normalized row built from (label, weight) pairs. Weights must
    // be non-negative with a positive total.
    void push_row(std::size_t dim, std::vector<std::pair<std::uint32_t, double>>& cells) {
        std::sort(cells.begin(), cells.end());
        double total = 0.0;
        for (const auto& [label, w] : cells) total += w;
        if (total <= 0.0) throw InternalError("alignment row with zero mass");
        for (const auto& [label, w] : cells)
            if (w > 0.0) entries[dim].push_back({label, w / total});
        offsets[dim].push_back(entries[dim].size());
    }
};

}  // namespace detail

// Builds per-page alignment rows for every dimension in the registry.
// Duplicate page_ids after the first are skipped; records with labels outside
// the registry are rejected and counted.
class AlignmentBuilder {
  public:
    explicit AlignmentBuilder(const GroupSpace& registry) : space_(registry) {
        space_.validate();
        if (space_.dims.size() != 8)
            throw ConfigError("alignment registry must define the 8 page dimensions");
        for (std::size_t i = 0; i < space_.dims.size(); ++i) {
            label_maps_.emplace_back();
            for (std::size_t l = 0; l < space_.dims[i].labels.size(); ++l)
                label_maps_.back()[space_.dims[i].labels[l]] = static_cast<std::uint32_t>(l);
        }
    }

    void add(const PageRecord& rec) {
        ++stats_.lines;
        if (seen_.count(rec.page_id)) {
            ++stats_.duplicate_pages;
            return;
        }
        Staged staged;
        if (!stage(rec, staged)) {
            ++stats_.rejected_records;
            return;
        }
        seen_.insert(rec.page_id);
        staged_.push_back(std::move(staged));
    }

    void note_malformed(const std::string& msg) {
        ++stats_.lines;
        ++stats_.malformed_lines;
        stats_.note_error(msg);
    }

    AlignmentTable finish(const BuildOptions& opts = {}) {
        if (stats_.lines > 0 &&
            static_cast<double>(stats_.malformed_lines) > opts.malformed_threshold * static_cast<double>(stats_.lines))
            throw Error("aborting: " + std::to_string(stats_.malformed_lines) + " of " +
                        std::to_string(stats_.lines) + " lines malformed");
        if (staged_.empty()) throw Error("empty corpus: no usable page records");

        // deterministic page order regardless of input order
        std::sort(staged_.begin(), staged_.end(),
                  [](const Staged& a, const Staged& b) { return a.page_id < b.page_id; });

        std::vector<std::int64_t> pages;
        std::vector<std::int8_t> quality;
        detail::RowBuilder rows(space_.dims.size());
        for (auto& st : staged_) {
            pages.push_back(st.page_id);
            quality.push_back(st.quality);
            for (std::size_t d = 0; d < space_.dims.size(); ++d) rows.push_row(d, st.rows[d]);
        }
        stats_.pages = pages.size();
        return AlignmentTable(space_, std::move(pages), std::move(rows.offsets), std::move(rows.entries),
                              std::move(quality));
    }

    const BuildStats& stats() const { return stats_; }

  private:
    struct Staged {
        std::int64_t page_id;
        std::int8_t quality;
        std::array<std::vector<std::pair<std::uint32_t, double>>, 8> rows;
    };

    bool stage(const PageRecord& rec, Staged& out) {
        out.page_id = rec.page_id;
        auto rank = try_quality_work_rank(rec.quality);
        if (!rank) {
            stats_.note_error("page " + std::to_string(rec.page_id) + ": quality label '" + rec.quality +
                              "' outside the six-level set");
            return false;
        }
        out.quality = static_cast<std::int8_t>(*rank);

        // sub-geo: unit weight per listed region, Oceania collapsed
        {
            std::map<std::string, double> counts;
            for (const auto& g : rec.sub_geo) counts[g] += 1.0;
            if (!fill_geo_row(0, collapse_oceania(counts), rec.page_id, out.rows[0])) return false;
        }
        // src-geo: fractional counts as given, "UNK" mapped to the unknown label
        {
            std::map<std::string, double> counts;
            for (const auto& [g, c] : rec.src_geo) counts[g == "UNK" ? std::string(kUnknownLabel) : g] += c;
            if (!fill_geo_row(1, collapse_oceania(counts), rec.page_id, out.rows[1])) return false;
        }
        // gender: collapse, dedupe
        {
            std::vector<std::string> collapsed;
            for (const auto& g : rec.gender) {
                std::string c = collapse_gender(g);
                if (std::find(collapsed.begin(), collapsed.end(), c) == collapsed.end())
                    collapsed.push_back(c);
            }
            if (!fill_multilabel_row(2, collapsed, rec.page_id, out.rows[2])) return false;
        }
        // occupations: dedupe, unit weights
        {
            std::vector<std::string> occs;
            for (const auto& o : rec.occupations)
                if (std::find(occs.begin(), occs.end(), o) == occs.end()) occs.push_back(o);
            if (!fill_multilabel_row(3, occs, rec.page_id, out.rows[3])) return false;
        }
        // one-hot categoricals
        const std::array<const std::string*, 4> cats = {
            &rec.first_letter_category, &rec.creation_date_category, &rec.relative_pageviews_category,
            &rec.num_sitelinks_category};
        for (std::size_t i = 0; i < cats.size(); ++i) {
            std::size_t dim = 4 + i;
            auto it = label_maps_[dim].find(*cats[i]);
            if (it == label_maps_[dim].end()) {
                stats_.note_error("page " + std::to_string(rec.page_id) + ": label '" + *cats[i] +
                                  "' not in dimension '" + space_.dims[dim].name + "'");
                return false;
            }
            out.rows[dim].emplace_back(it->second, 1.0);
        }
        return true;
    }

    bool fill_geo_row(std::size_t dim, const std::map<std::string, double>& counts, std::int64_t page,
                      std::vector<std::pair<std::uint32_t, double>>& row) {
        double total = 0.0;
        for (const auto& [label, c] : counts) {
            if (c <= 0.0) continue;
            auto it = label_maps_[dim].find(label);
            if (it == label_maps_[dim].end()) {
                stats_.note_error("page " + std::to_string(page) + ": label '" + label +
                                  "' not in dimension '" + space_.dims[dim].name + "'");
                return false;
            }
            row.emplace_back(it->second, c);
            total += c;
        }
        if (total <= 0.0) row.emplace_back(0, 1.0);  // no known membership -> unknown
        return true;
    }

    bool fill_multilabel_row(std::size_t dim, const std::vector<std::string>& labels, std::int64_t page,
                             std::vector<std::pair<std::uint32_t, double>>& row) {
        for (const auto& label : labels) {
            auto it = label_maps_[dim].find(label);
            if (it == label_maps_[dim].end()) {
                stats_.note_error("page " + std::to_string(page) + ": label '" + label +
                                  "' not in dimension '" + space_.dims[dim].name + "'");
                return false;
            }
            row.emplace_back(it->second, 1.0);
        }
        if (row.empty()) row.emplace_back(0, 1.0);
        return true;
    }

    GroupSpace space_;
    std::vector<std::unordered_map<std::string, std::uint32_t>> label_maps_;
    std::unordered_set<std::int64_t> seen_;
    std::vector<Staged> staged_;
    BuildStats stats_;
};

// Parses one JSONL metadata record. Throws ParseError on malformed JSON or
// missing fields.
inline PageRecord parse_page_record(const std::string& line, const std::string& path, std::size_t line_no) {
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ParseError(path, line_no, "invalid JSON record");
    PageRecord rec;
    try {
        rec.page_id = j.at("page_id").get<std::int64_t>();
        for (const auto& g : j.value("page_subcont_regions", nlohmann::json::array()))
            rec.sub_geo.push_back(g.get<std::string>());
        if (j.contains("source_subcont_regions"))
            for (const auto& [k, v] : j.at("source_subcont_regions").items())
                rec.src_geo.emplace_back(k, v.get<double>());
        for (const auto& g : j.value("gender", nlohmann::json::array()))
            rec.gender.push_back(g.get<std::string>());
        for (const auto& o : j.value("occupations", nlohmann::json::array()))
            rec.occupations.push_back(o.get<std::string>());
        rec.first_letter_category = j.at("first_letter_category").get<std::string>();
        rec.creation_date_category = j.at("creation_date_category").get<std::string>();
        rec.relative_pageviews_category = j.at("relative_pageviews_category").get<std::string>();
        rec.num_sitelinks_category = j.at("num_sitelinks_category").get<std::string>();
        rec.quality = j.at("qual_cat").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path, line_no, std::string("bad record: ") + e.what());
    }
    return rec;
}

// Streams a JSONL (optionally gzipped) metadata file through the builder.
inline AlignmentTable build_alignment_from_file(const std::string& path, const GroupSpace& registry,
                                                BuildStats* stats_out = nullptr,
                                                const BuildOptions& opts = {}) {
    AlignmentBuilder builder(registry);
    LineReader reader(path);
    std::string line;
    while (reader.next(line)) {
        if (line.empty()) continue;
        try {
            builder.add(parse_page_record(line, path, reader.line_number()));
        } catch (const ParseError& e) {
            builder.note_malformed(e.what());
        }
    }
    AlignmentTable table = builder.finish(opts);
    if (stats_out) *stats_out = builder.stats();
    return table;
}

// ---------------------------------------------------------------------------
// Binary cache (bit-exact round trip) and CSV escape hatch

namespace detail {

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw Error("truncated alignment cache");
}

inline void write_string(std::ofstream& out, const std::string& s) {
    write_pod(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::ifstream& in) {
    std::uint32_t n;
    read_pod(in, n);
    std::string s(n, '\0');
    in.read(s.data(), n);
    if (!in) throw Error("truncated alignment cache");
    return s;
}

}  // namespace detail

inline constexpr char kAlignMagic[8] = {'F', 'E', 'A', 'L', 'I', 'G', 'N', '1'};

inline void AlignmentTable::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path);
    out.write(kAlignMagic, sizeof(kAlignMagic));
    detail::write_pod(out, static_cast<std::uint32_t>(space_.dims.size()));
    detail::write_pod(out, static_cast<std::uint64_t>(pages_.size()));
    for (const auto& d : space_.dims) {
        detail::write_string(out, d.name);
        detail::write_pod(out, static_cast<std::uint8_t>(d.has_unknown() ? 1 : 0));
        detail::write_pod(out, static_cast<std::uint32_t>(d.labels.size()));
        for (const auto& l : d.labels) detail::write_string(out, l);
        detail::write_pod(out, static_cast<std::uint32_t>(d.background.size()));
        for (double b : d.background) detail::write_pod(out, b);
    }
    out.write(reinterpret_cast<const char*>(pages_.data()),
              static_cast<std::streamsize>(pages_.size() * sizeof(std::int64_t)));
    out.write(reinterpret_cast<const char*>(quality_.data()),
              static_cast<std::streamsize>(quality_.size()));
    for (std::size_t d = 0; d < space_.dims.size(); ++d) {
        detail::write_pod(out, static_cast<std::uint64_t>(entries_[d].size()));
        out.write(reinterpret_cast<const char*>(offsets_[d].data()),
                  static_cast<std::streamsize>(offsets_[d].size() * sizeof(std::uint64_t)));
        for (const auto& e : entries_[d]) {
            detail::write_pod(out, e.label);
            detail::write_pod(out, e.weight);
        }
    }
    if (!out) throw Error("write failure on " + path);
}

inline AlignmentTable AlignmentTable::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInput("cannot open alignment cache " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kAlignMagic, sizeof(magic)) != 0)
        throw Error(path + " is not an alignment cache");
    std::uint32_t ndims;
    std::uint64_t npages;
    detail::read_pod(in, ndims);
    detail::read_pod(in, npages);
    GroupSpace space;
    for (std::uint32_t d = 0; d < ndims; ++d) {
        DimensionSpec dim;
        dim.name = detail::read_string(in);
        std::uint8_t unk;
        detail::read_pod(in, unk);
        if (unk) dim.unknown_index = 0;
        std::uint32_t nlabels;
        detail::read_pod(in, nlabels);
        for (std::uint32_t l = 0; l < nlabels; ++l) dim.labels.push_back(detail::read_string(in));
        std::uint32_t nbg;
        detail::read_pod(in, nbg);
        dim.background.resize(nbg);
        for (auto& b : dim.background) detail::read_pod(in, b);
        space.dims.push_back(std::move(dim));
    }
    std::vector<std::int64_t> pages(npages);
    in.read(reinterpret_cast<char*>(pages.data()),
            static_cast<std::streamsize>(npages * sizeof(std::int64_t)));
    std::vector<std::int8_t> quality(npages);
    in.read(reinterpret_cast<char*>(quality.data()), static_cast<std::streamsize>(npages));
    if (!in) throw Error("truncated alignment cache");
    std::vector<std::vector<std::uint64_t>> offsets(ndims);
    std::vector<std::vector<Entry>> entries(ndims);
    for (std::uint32_t d = 0; d < ndims; ++d) {
        std::uint64_t nentries;
        detail::read_pod(in, nentries);
        offsets[d].resize(npages + 1);
        in.read(reinterpret_cast<char*>(offsets[d].data()),
                static_cast<std::streamsize>((npages + 1) * sizeof(std::uint64_t)));
        entries[d].resize(nentries);
        for (auto& e : entries[d]) {
            detail::read_pod(in, e.label);
            detail::read_pod(in, e.weight);
        }
    }
    return AlignmentTable(std::move(space), std::move(pages), std::move(offsets), std::move(entries),
                          std::move(quality));
}

inline void AlignmentTable::save_csv(const std::string& directory) const {
    namespace fs = std::filesystem;
    fs::create_directories(directory);
    for (std::size_t d = 0; d < space_.dims.size(); ++d) {
        std::ofstream out(fs::path(directory) / ("page-" + space_.dims[d].name + "-align.csv"),
                          std::ios::trunc);
        out << "page_id,label,weight\n";
        for (std::size_t r = 0; r < pages_.size(); ++r)
            for (const auto& e : row(d, r))
                out << pages_[r] << ',' << space_.dims[d].labels[e.label] << ','
                    << format_double(e.weight) << '\n';
    }
}

}  // namespace fareval
