#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <set>

#include "fareval/alignment.hpp"
#include "helpers.hpp"

using namespace fareval;
using testutil::TempDir;
using testutil::make_record;
using testutil::mini_registry;

namespace {

double row_value(const AlignmentTable& table, std::size_t dim, std::int64_t page,
                 const std::string& label) {
    auto row_idx = table.row_of(page);
    REQUIRE(row_idx);
    auto label_idx = table.space().dims[dim].label_index(label);
    REQUIRE(label_idx);
    for (const auto& e : table.row(dim, *row_idx))
        if (e.label == *label_idx) return e.weight;
    return 0.0;
}

double row_sum(const AlignmentTable& table, std::size_t dim, std::size_t row) {
    double total = 0.0;
    for (const auto& e : table.row(dim, row)) total += e.weight;
    return total;
}

}  // namespace

TEST_CASE("oceania collapse") {
    std::map<std::string, double> geo = {{"Melanesia", 1.0}, {"Polynesia", 1.0}};
    auto collapsed = collapse_oceania(geo);
    REQUIRE(collapsed.size() == 1);
    CHECK(collapsed.at("Oceania") == 2.0);

    std::map<std::string, double> europe = {{"Northern Europe", 3.0}};
    CHECK(collapse_oceania(europe) == europe);
    CHECK(collapse_oceania({}).empty());
}

TEST_CASE("gender collapse") {
    CHECK(collapse_gender("transgender female") == "female");
    CHECK(collapse_gender("cisgender female") == "female");
    CHECK(collapse_gender("transgender male") == "male");
    CHECK(collapse_gender("cisgender male") == "male");
    CHECK(collapse_gender("male") == "male");
    CHECK(collapse_gender("female") == "female");
    CHECK(collapse_gender("non-binary") == "NB");
    CHECK(collapse_gender("intersex") == "NB");
    CHECK(collapse_gender("eunuch") == "NB");
    CHECK(collapse_gender("") == "@UNKNOWN");
}

TEST_CASE("multi-label rows are normalized") {
    AlignmentBuilder builder(mini_registry());
    auto rec = make_record(1);
    rec.sub_geo = {"Northern America", "Southern Europe"};
    rec.occupations = {"artist", "scientist", "writer", "athlete"};
    builder.add(rec);
    AlignmentTable table = builder.finish();

    CHECK(row_value(table, 0, 1, "Northern America") == Catch::Approx(0.5));
    CHECK(row_value(table, 0, 1, "Southern Europe") == Catch::Approx(0.5));
    CHECK(row_value(table, 3, 1, "artist") == Catch::Approx(0.25));
    CHECK(row_value(table, 3, 1, "@UNKNOWN") == 0.0);
}

TEST_CASE("empty memberships fall to the unknown label") {
    AlignmentBuilder builder(mini_registry());
    builder.add(make_record(7));  // nothing known anywhere
    AlignmentTable table = builder.finish();
    for (std::size_t dim : {0, 1, 2, 3}) CHECK(row_value(table, dim, 7, "@UNKNOWN") == 1.0);
    // categoricals are one-hot
    CHECK(row_value(table, 4, 7, "a-d") == 1.0);
}

TEST_CASE("source geography keeps fractional counts") {
    AlignmentBuilder builder(mini_registry());
    auto rec = make_record(303);
    rec.src_geo = {{"Northern America", 202.0}, {"UNK", 23.0}, {"Northern Europe", 9.0},
                   {"Southern Europe", 4.0}};
    builder.add(rec);
    AlignmentTable table = builder.finish();
    double total = 202.0 + 23.0 + 9.0 + 4.0;
    CHECK(row_value(table, 1, 303, "Northern America") == Catch::Approx(202.0 / total));
    CHECK(row_value(table, 1, 303, "@UNKNOWN") == Catch::Approx(23.0 / total));
    CHECK(row_sum(table, 1, *table.row_of(303)) == Catch::Approx(1.0).margin(1e-9));
}

TEST_CASE("gender list is collapsed and deduplicated") {
    AlignmentBuilder builder(mini_registry());
    auto rec = make_record(5);
    rec.gender = {"transgender female", "female"};
    builder.add(rec);
    auto rec2 = make_record(6);
    rec2.gender = {"male", "genderqueer"};
    builder.add(rec2);
    AlignmentTable table = builder.finish();
    CHECK(row_value(table, 2, 5, "female") == 1.0);  // both labels collapse to one
    CHECK(row_value(table, 2, 6, "male") == Catch::Approx(0.5));
    CHECK(row_value(table, 2, 6, "NB") == Catch::Approx(0.5));
}

TEST_CASE("every row sums to one and unknown excludes known mass") {
    AlignmentBuilder builder(mini_registry());
    std::mt19937_64 rng(11);
    std::vector<std::string> geos = {"Northern America", "Northern Europe", "Oceania",
                                     "Southern Europe"};
    for (int i = 0; i < 60; ++i) {
        auto rec = make_record(100 + i);
        if (rng() % 3) rec.sub_geo = {geos[rng() % geos.size()], geos[rng() % geos.size()]};
        if (rng() % 3) rec.src_geo = {{geos[rng() % geos.size()], double(1 + rng() % 50)}};
        if (rng() % 2) rec.gender = {"male"};
        if (rng() % 2) rec.occupations = {"artist"};
        builder.add(rec);
    }
    AlignmentTable table = builder.finish();
    for (std::size_t dim = 0; dim < table.space().dims.size(); ++dim) {
        for (std::size_t r = 0; r < table.page_count(); ++r) {
            CHECK(row_sum(table, dim, r) == Catch::Approx(1.0).margin(1e-9));
            if (table.space().dims[dim].has_unknown()) {
                double unknown = 0.0, known = 0.0;
                for (const auto& e : table.row(dim, r)) (e.label == 0 ? unknown : known) += e.weight;
                // a page is either fully unknown or carries known mass
                if (unknown == 1.0) CHECK(known == 0.0);
            }
        }
    }
}

TEST_CASE("duplicate page ids are skipped") {
    AlignmentBuilder builder(mini_registry());
    auto rec = make_record(42);
    rec.gender = {"male"};
    builder.add(rec);
    auto dup = make_record(42);
    dup.gender = {"female"};
    builder.add(dup);
    AlignmentTable table = builder.finish();
    CHECK(table.page_count() == 1);
    CHECK(builder.stats().duplicate_pages == 1);
    CHECK(row_value(table, 2, 42, "male") == 1.0);
}

TEST_CASE("records with labels outside the registry are rejected") {
    AlignmentBuilder builder(mini_registry());
    auto good = make_record(1);
    builder.add(good);
    auto bad = make_record(2);
    bad.first_letter_category = "z!";
    builder.add(bad);
    auto bad_quality = make_record(3);
    bad_quality.quality = "Excellent";
    builder.add(bad_quality);
    AlignmentTable table = builder.finish();
    CHECK(table.page_count() == 1);
    CHECK(builder.stats().rejected_records == 2);
}

TEST_CASE("build is order-insensitive for distinct pages") {
    auto build = [](const std::vector<int>& order, const std::string& path) {
        AlignmentBuilder builder(mini_registry());
        for (int i : order) {
            auto rec = make_record(i);
            rec.sub_geo = {i % 2 ? "Oceania" : "Northern Europe"};
            rec.gender = {i % 3 ? "male" : "female"};
            builder.add(rec);
        }
        builder.finish().save(path);
    };
    TempDir dir;
    build({1, 2, 3, 4, 5, 6}, dir.sub("fwd.bin"));
    build({6, 3, 5, 1, 4, 2}, dir.sub("perm.bin"));
    std::ifstream f1(dir.sub("fwd.bin"), std::ios::binary), f2(dir.sub("perm.bin"), std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
}

TEST_CASE("cache round trip is bit exact") {
    TempDir dir;
    AlignmentBuilder builder(mini_registry());
    for (int i = 0; i < 20; ++i) {
        auto rec = make_record(i);
        rec.sub_geo = {"Northern America"};
        rec.src_geo = {{"Northern Europe", 7.0}, {"UNK", 3.0}};
        rec.gender = {i % 2 ? "male" : "non-binary"};
        builder.add(rec);
    }
    AlignmentTable table = builder.finish();
    table.save(dir.sub("a.bin"));
    AlignmentTable loaded = AlignmentTable::load(dir.sub("a.bin"));
    loaded.save(dir.sub("b.bin"));
    std::ifstream f1(dir.sub("a.bin"), std::ios::binary), f2(dir.sub("b.bin"), std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    REQUIRE(s1 == s2);
    CHECK(loaded.page_count() == table.page_count());
    CHECK(loaded.space().dims.size() == 8);
    CHECK(loaded.work_rank(0) == table.work_rank(0));
}

TEST_CASE("jsonl stream build with malformed lines") {
    TempDir dir;
    std::string good =
        R"({"page_id": 1, "page_subcont_regions": ["Oceania"], "source_subcont_regions": {},)"
        R"( "gender": ["male"], "occupations": [], "first_letter_category": "a-d",)"
        R"( "creation_date_category": "2001-2006", "relative_pageviews_category": "High",)"
        R"( "num_sitelinks_category": "English only", "qual_cat": "B"})";
    auto path = dir.file("pages.jsonl", good + "\nnot json at all\n");

    BuildStats stats;
    BuildOptions opts;
    opts.malformed_threshold = 0.9;
    AlignmentTable table = build_alignment_from_file(path, mini_registry(), &stats, opts);
    CHECK(table.page_count() == 1);
    CHECK(stats.malformed_lines == 1);
    CHECK(row_value(table, 0, 1, "Oceania") == 1.0);
    CHECK(table.work_rank(0) == 3);  // B

    // default threshold of 0.1% aborts on systematic corruption
    CHECK_THROWS_AS(build_alignment_from_file(path, mini_registry(), nullptr, BuildOptions{}), Error);
}

TEST_CASE("empty corpus is an error") {
    AlignmentBuilder builder(mini_registry());
    CHECK_THROWS_AS(builder.finish(), Error);
}

TEST_CASE("unknown rates") {
    AlignmentBuilder builder(mini_registry());
    for (int i = 0; i < 10; ++i) {
        auto rec = make_record(i);
        if (i < 4) rec.gender = {"male"};
        builder.add(rec);
    }
    AlignmentTable table = builder.finish();
    CHECK(table.unknown_rate(2) == Catch::Approx(0.6));
}

TEST_CASE("csv escape hatch writes one table per dimension") {
    TempDir dir;
    AlignmentBuilder builder(mini_registry());
    auto rec = make_record(3);
    rec.sub_geo = {"Oceania"};
    builder.add(rec);
    AlignmentTable table = builder.finish();
    table.save_csv(dir.sub("csv"));
    for (const auto& d : table.space().dims) {
        std::ifstream in(dir.sub("csv") + "/page-" + d.name + "-align.csv");
        REQUIRE(in.good());
        std::string header;
        std::getline(in, header);
        CHECK(header == "page_id,label,weight");
        std::string row;
        CHECK(std::getline(in, row).good());
    }
}

TEST_CASE("gender collapse is total onto four labels") {
    std::mt19937_64 rng(77);
    const std::set<std::string> expected = {"@UNKNOWN", "female", "male", "NB"};
    for (int trial = 0; trial < 300; ++trial) {
        std::string raw;
        std::size_t len = rng() % 24;
        for (std::size_t i = 0; i < len; ++i) raw.push_back(static_cast<char>(rng() % 256));
        CHECK(expected.count(collapse_gender(raw)) == 1);
    }
}
