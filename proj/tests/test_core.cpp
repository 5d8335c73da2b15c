#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fareval/core.hpp"

using namespace fareval;

namespace {

Distribution make_dist(std::initializer_list<double> values) {
    SparseAccumulator acc(values.size());
    std::uint64_t i = 0;
    for (double v : values) acc.add(i++, v);
    return acc.freeze();
}

Distribution random_normalized(std::mt19937_64& rng, std::uint64_t n) {
    SparseAccumulator acc(n);
    for (std::uint64_t i = 0; i < n; ++i)
        if (rng() % 3 != 0) acc.add(i, static_cast<double>(rng() % 1000 + 1));
    Distribution d = acc.freeze();
    if (d.cells.empty()) {
        acc.add(0, 1.0);
        d = acc.freeze();
    }
    return normalize(d);
}

}  // namespace

TEST_CASE("discount weights") {
    CHECK_THROWS_AS(discount(0), InvalidArgument);
    CHECK(discount(1).weights == std::vector<double>{1.0});
    CHECK(discount(2).weights == std::vector<double>{1.0, 1.0});

    auto d4 = discount(4);
    CHECK(d4[0] == Catch::Approx(1.0));
    CHECK(d4[1] == Catch::Approx(1.0));
    CHECK(d4[2] == Catch::Approx(0.63093).margin(1e-5));
    CHECK(d4[3] == Catch::Approx(0.5));
}

TEST_CASE("discount is positive, non-increasing, and prefix-stable") {
    for (std::size_t n : {1, 2, 3, 7, 50, 500}) {
        auto d = discount(n);
        auto d1 = discount(n + 1);
        for (std::size_t i = 0; i < n; ++i) {
            CHECK(d[i] > 0.0);
            CHECK(d[i] == d1[i]);
            if (i > 0) CHECK(d[i] <= d[i - 1]);
        }
    }
}

TEST_CASE("normalize") {
    auto d = normalize(make_dist({2.0, 2.0}));
    CHECK(d.value(0) == Catch::Approx(0.5));
    CHECK(d.value(1) == Catch::Approx(0.5));

    auto e = normalize(make_dist({1.0, 0.0, 3.0}));
    CHECK(e.value(0) == Catch::Approx(0.25));
    CHECK(e.value(1) == 0.0);
    CHECK(e.value(2) == Catch::Approx(0.75));
    CHECK(e.cells.size() == 2);  // zero stays absent

    CHECK_THROWS_AS(normalize(make_dist({0.0, 0.0})), DegenerateDistribution);
}

TEST_CASE("normalize is idempotent") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        Distribution d = random_normalized(rng, 20);
        Distribution dd = normalize(d);
        REQUIRE(dd.cells.size() == d.cells.size());
        for (std::size_t i = 0; i < d.cells.size(); ++i) {
            CHECK(dd.cells[i].first == d.cells[i].first);
            CHECK(dd.cells[i].second == Catch::Approx(d.cells[i].second).margin(1e-12));
        }
    }
}

TEST_CASE("js divergence basics") {
    Distribution p = make_dist({1.0, 0.0});
    Distribution q = make_dist({0.0, 1.0});
    CHECK(js_divergence(p, p) == 0.0);
    CHECK(js_divergence(p, q) == Catch::Approx(1.0));

    Distribution half = normalize(make_dist({1.0, 1.0}));
    CHECK(js_divergence(half, p) == Catch::Approx(0.31128).margin(1e-5));
}

TEST_CASE("js divergence rejects bad input") {
    Distribution p = make_dist({1.0, 0.0});
    Distribution small = make_dist({1.0});
    CHECK_THROWS_AS(js_divergence(p, small), InvalidArgument);
    CHECK_THROWS_AS(js_divergence(p, make_dist({0.5, 0.1})), InvalidArgument);
}

TEST_CASE("js divergence is symmetric and bounded") {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        Distribution p = random_normalized(rng, 12);
        Distribution q = random_normalized(rng, 12);
        double pq = js_divergence(p, q);
        double qp = js_divergence(q, p);
        CHECK(std::abs(pq - qp) <= 1e-12);
        CHECK(pq >= 0.0);
        CHECK(pq <= 1.0);
    }
}

TEST_CASE("quality work ranks") {
    CHECK(quality_work_rank("Stub") == 0);
    CHECK(quality_work_rank("C") == 2);
    CHECK(quality_work_rank("FA") == 5);
    CHECK_THROWS_AS(quality_work_rank("A+"), InvalidArgument);
}

TEST_CASE("group space flattening and validation") {
    GroupSpace space;
    DimensionSpec a{"a", {"@UNKNOWN", "x", "y"}, 0, {0.5, 0.5}};
    DimensionSpec b{"b", {"p", "q"}, std::nullopt, {}};
    space.dims = {a, b};
    space.validate();
    CHECK(space.cardinality() == 6);
    CHECK(space.strides() == std::vector<std::uint64_t>{2, 1});
    CHECK(space.averaged_count() == 1);

    GroupSpace bad;
    bad.dims = {b, a};  // averaged dim after a raw one
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("paper-scale cardinality") {
    GroupSpace space;
    auto dim = [](const std::string& name, std::size_t n) {
        DimensionSpec d;
        d.name = name;
        for (std::size_t i = 0; i < n; ++i) d.labels.push_back(name + std::to_string(i));
        return d;
    };
    for (auto [name, n] : std::vector<std::pair<std::string, std::size_t>>{
             {"sub-geo", 21}, {"src-geo", 21}, {"gender", 4}, {"occ", 33},
             {"alpha", 4},    {"age", 4},      {"pop", 4},    {"langs", 3}})
        space.dims.push_back(dim(name, n));
    CHECK(space.cardinality() == 11176704ull);
}

TEST_CASE("sparse accumulator dense/sparse paths agree") {
    std::mt19937_64 rng(3);
    SparseAccumulator dense(100, 1000);
    SparseAccumulator sparse(100, 10);
    for (int i = 0; i < 500; ++i) {
        std::uint64_t key = rng() % 100;
        double v = static_cast<double>(rng() % 50) / 7.0;
        dense.add(key, v);
        sparse.add(key, v);
    }
    auto a = dense.freeze();
    auto b = sparse.freeze();
    REQUIRE(a.cells.size() == b.cells.size());
    for (std::size_t i = 0; i < a.cells.size(); ++i) {
        CHECK(a.cells[i].first == b.cells[i].first);
        CHECK(a.cells[i].second == Catch::Approx(b.cells[i].second).margin(1e-12));
    }
}
