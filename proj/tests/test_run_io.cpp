#include <catch2/catch_amalgamated.hpp>

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "fareval/run_io.hpp"

using namespace fareval;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("fareval-test-" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name, const std::string& content) const {
        auto p = path / name;
        std::ofstream out(p, std::ios::binary);
        out << content;
        return p.string();
    }
};

}  // namespace

TEST_CASE("task 1 run parsing") {
    TempDir dir;
    auto path = dir.file("run.tsv", "187\t682\n187\t954\n");
    RunData run = parse_run(path, 1);
    REQUIRE(run.task1.size() == 1);
    CHECK(run.task1[0].topic_id == 187);
    CHECK(run.task1[0].pages == std::vector<std::int64_t>{682, 954});
    CHECK(run.warnings.empty());
}

TEST_CASE("task 2 run parsing") {
    TempDir dir;
    auto path = dir.file("run.tsv", "187\t1\t682\n187\t2\t682\n");
    RunData run = parse_run(path, 2);
    REQUIRE(run.task2.size() == 1);
    REQUIRE(run.task2[0].rankings.size() == 2);
    CHECK(run.task2[0].rankings[0].pages == std::vector<std::int64_t>{682});
    CHECK(run.task2[0].rankings[1].pages == std::vector<std::int64_t>{682});
}

TEST_CASE("empty run file warns") {
    TempDir dir;
    RunData run = parse_run(dir.file("empty.tsv", ""), 1);
    CHECK(run.task1.empty());
    CHECK(run.warnings.size() == 1);
}

TEST_CASE("run parse errors carry line numbers") {
    TempDir dir;
    CHECK_THROWS_MATCHES(parse_run(dir.file("a.tsv", "1\t2\n1\t2\t3\n"), 1), ParseError,
                         Catch::Matchers::MessageMatches(Catch::Matchers::ContainsSubstring(":2:")));
    CHECK_THROWS_AS(parse_run(dir.file("b.tsv", "x\t2\n"), 1), ParseError);
    CHECK_THROWS_AS(parse_run(dir.file("c.tsv", "1\tx\n"), 1), ParseError);
    CHECK_THROWS_AS(parse_run(dir.file("d.tsv", "1\t2 3\n"), 2), ParseError);
}

TEST_CASE("duplicate pages in a ranking are dropped with a warning") {
    TempDir dir;
    RunData run = parse_run(dir.file("run.tsv", "5\t10\n5\t11\n5\t10\n"), 1);
    CHECK(run.task1[0].pages == std::vector<std::int64_t>{10, 11});
    REQUIRE(run.warnings.size() == 1);
}

TEST_CASE("task 2 rep numbers may arrive out of order but not with gaps") {
    TempDir dir;
    RunData ok = parse_run(dir.file("ok.tsv", "7\t2\t30\n7\t1\t20\n"), 2);
    CHECK(ok.task2[0].rankings[0].pages == std::vector<std::int64_t>{20});
    CHECK(ok.task2[0].rankings[1].pages == std::vector<std::int64_t>{30});

    CHECK_THROWS_AS(parse_run(dir.file("gap.tsv", "7\t1\t20\n7\t3\t30\n"), 2), ParseError);
}

TEST_CASE("rankings beyond the task limit are truncated with a warning") {
    TempDir dir;
    std::string content;
    for (int i = 0; i < 30; ++i) content += "9\t" + std::to_string(100 + i) + "\n";
    TaskLimits limits;
    limits.task1_length = 25;
    RunData run = parse_run(dir.file("long.tsv", content), 1, limits);
    CHECK(run.task1[0].pages.size() == 25);
    CHECK(run.warnings.size() == 1);
}

TEST_CASE("run round trip is canonical") {
    TempDir dir;
    std::mt19937_64 rng(99);
    for (int task : {1, 2}) {
        RunData run;
        run.task = task;
        for (int t = 0; t < 4; ++t) {
            if (task == 1) {
                Ranking r;
                r.topic_id = 50 + t;
                for (int i = 0; i < 20; ++i) r.pages.push_back(static_cast<std::int64_t>(rng() % 10000));
                std::sort(r.pages.begin(), r.pages.end());
                r.pages.erase(std::unique(r.pages.begin(), r.pages.end()), r.pages.end());
                run.task1.push_back(std::move(r));
            } else {
                RankingSequence s;
                s.topic_id = 50 + t;
                for (int rep = 0; rep < 3; ++rep) {
                    Ranking r;
                    r.topic_id = s.topic_id;
                    for (int i = 0; i < 5; ++i) r.pages.push_back(static_cast<std::int64_t>(rng() % 1000));
                    std::sort(r.pages.begin(), r.pages.end());
                    r.pages.erase(std::unique(r.pages.begin(), r.pages.end()), r.pages.end());
                    s.rankings.push_back(std::move(r));
                }
                run.task2.push_back(std::move(s));
            }
        }
        auto p1 = (dir.path / ("rt1-" + std::to_string(task))).string();
        auto p2 = (dir.path / ("rt2-" + std::to_string(task))).string();
        serialize_run(run, p1);
        RunData parsed = parse_run(p1, task);
        serialize_run(parsed, p2);
        std::ifstream f1(p1), f2(p2);
        std::string s1((std::istreambuf_iterator<char>(f1)), {});
        std::string s2((std::istreambuf_iterator<char>(f2)), {});
        CHECK(s1 == s2);
        if (task == 1) {
            REQUIRE(parsed.task1.size() == run.task1.size());
            for (std::size_t i = 0; i < run.task1.size(); ++i)
                CHECK(parsed.task1[i].pages == run.task1[i].pages);
        } else {
            REQUIRE(parsed.task2.size() == run.task2.size());
            for (std::size_t i = 0; i < run.task2.size(); ++i) {
                REQUIRE(parsed.task2[i].rankings.size() == run.task2[i].rankings.size());
                for (std::size_t j = 0; j < run.task2[i].rankings.size(); ++j)
                    CHECK(parsed.task2[i].rankings[j].pages == run.task2[i].rankings[j].pages);
            }
        }
    }
}

TEST_CASE("qrels parsing") {
    TempDir dir;
    std::vector<std::string> warnings;
    auto qrels = parse_qrels(dir.file("q.txt", "187 682\n187\t954\n188   10\n187 682\n"), &warnings);
    REQUIRE(qrels.size() == 2);
    CHECK(qrels[0].topic_id == 187);
    CHECK(qrels[0].pages == std::vector<std::int64_t>{682, 954});
    CHECK(qrels[1].pages == std::vector<std::int64_t>{10});
    CHECK(warnings.size() == 1);  // the duplicate pair

    CHECK_THROWS_AS(parse_qrels(dir.file("bad.txt", "187\n")), ParseError);
    CHECK_THROWS_AS(parse_qrels(dir.file("bad2.txt", "187 abc\n")), ParseError);
}

TEST_CASE("BOM and CRLF are tolerated") {
    TempDir dir;
    auto path = dir.file("bom.tsv",
                         "\xEF\xBB\xBF"
                         "187\t682\r\n187\t954\r\n");
    RunData run = parse_run(path, 1);
    REQUIRE(run.task1.size() == 1);
    CHECK(run.task1[0].pages == std::vector<std::int64_t>{682, 954});
}

TEST_CASE("gzip input is detected by magic bytes") {
    TempDir dir;
    auto plain = (dir.path / "x.jsonl").string();
    {
        std::ofstream out(plain, std::ios::binary);
        out << "line one\nline two\n";
    }
    auto gz_path = (dir.path / "x.jsonl.gz").string();
    gzFile gz = gzopen(gz_path.c_str(), "wb");
    const char* data = "line one\nline two\n";
    gzwrite(gz, data, static_cast<unsigned>(std::strlen(data)));
    gzclose(gz);

    for (const auto& p : {plain, gz_path}) {
        LineReader reader(p);
        std::string line;
        REQUIRE(reader.next(line));
        CHECK(line == "line one");
        REQUIRE(reader.next(line));
        CHECK(line == "line two");
        CHECK_FALSE(reader.next(line));
    }
}

TEST_CASE("topics JSONL") {
    TempDir dir;
    auto path = dir.file(
        "topics.jsonl",
        R"({"id": 1, "title": "t", "keywords": ["a", "b"], "rel_docs": [3, 4], "homepage": "x"})"
        "\n");
    auto topics = parse_topics(path);
    REQUIRE(topics.size() == 1);
    CHECK(topics[0].id == 1);
    CHECK(topics[0].keywords == std::vector<std::string>{"a", "b"});
    CHECK(topics[0].rel_docs == std::vector<std::int64_t>{3, 4});

    CHECK_THROWS_AS(parse_topics(dir.file("nokw.jsonl", R"({"id": 2, "keywords": []})" "\n")), ParseError);
}

TEST_CASE("background loading validates the sum") {
    TempDir dir;
    auto good = load_background(dir.file("bg.csv", "x,0.25\ny,0.75\n"));
    REQUIRE(good.size() == 2);
    CHECK(good[1].second == 0.75);
    CHECK_THROWS_AS(load_background(dir.file("bad.csv", "x,0.5\ny,0.6\n")), ConfigError);
}

TEST_CASE("registry loading") {
    TempDir dir;
    dir.file("wp.csv", "x,0.25\ny,0.75\n");
    auto path = dir.file("reg.json", R"({
      "dimensions": [
        {"name": "geo", "labels": ["@UNKNOWN", "x", "y"], "unknown": true, "background": "wp.csv"},
        {"name": "cat", "labels": ["p", "q"]}
      ]})");
    GroupSpace space = load_registry(path);
    REQUIRE(space.dims.size() == 2);
    CHECK(space.dims[0].has_unknown());
    CHECK(space.dims[0].background == std::vector<double>{0.25, 0.75});
    CHECK(space.averaged_count() == 1);
    CHECK(space.cardinality() == 6);

    auto bad = dir.file("bad.json", R"({
      "dimensions": [
        {"name": "cat", "labels": ["p", "q"]},
        {"name": "geo", "labels": ["@UNKNOWN", "x"], "unknown": true, "background": {"x": 1.0}}
      ]})");
    CHECK_THROWS_AS(load_registry(bad), ConfigError);  // averaged dim after raw dim
}

TEST_CASE("quality metadata parsing") {
    TempDir dir;
    auto jsonl = dir.file("meta.jsonl", R"({"page_id": 10, "qual_cat": "GA"})"
                                        "\n"
                                        R"({"page_id": 11, "qual_cat": "Stub"})"
                                        "\n");
    auto q = parse_metadata(jsonl);
    CHECK(q.at(10) == 4);
    CHECK(q.at(11) == 0);

    auto csv = dir.file("meta.csv", "page_id,quality\n10,FA\n");
    CHECK(parse_metadata(csv).at(10) == 5);

    CHECK_THROWS_AS(parse_metadata(dir.file("bad.jsonl", R"({"page_id": 1, "qual_cat": "A+"})" "\n")),
                    ParseError);
}

TEST_CASE("corrupt gzip input is rejected with a position") {
    TempDir dir;
    std::string fake = "\x1f\x8b";
    fake += "this is not a deflate stream at all";
    auto path = dir.file("fake.gz", fake);
    CHECK_THROWS_AS(parse_run(path, 1), ParseError);
}
