#include <map>

#include "doctest.h"

#include "requery/corpus.hpp"
#include "test_util.hpp"

using namespace requery;
using testutil::TempDir;
using testutil::read_file;
using testutil::write_file;

TEST_CASE("document store add, lookup and ordering") {
    DocumentStore store;
    store.add({"d2", "Title two", "body two"});
    store.add({"d1", "", "body one"});

    CHECK(store.size() == 2);
    CHECK_FALSE(store.empty());
    CHECK(store.documents()[0].id == "d2");
    CHECK(store.documents()[1].id == "d1");

    REQUIRE(store.lookup("d1") != nullptr);
    CHECK(store.lookup("d1")->text == "body one");
    CHECK(store.lookup("missing") == nullptr);
    CHECK(store.at("d2").title == "Title two");
    CHECK_THROWS_AS(store.at("missing"), std::out_of_range);
    CHECK_THROWS_AS(store.add({"d1", "", "duplicate"}), ParseError);
}

TEST_CASE("doc_prompt_text joins title and body") {
    CHECK(doc_prompt_text({"x", "A Title", "Some body."}) == "A Title Some body.");
    CHECK(doc_prompt_text({"x", "", "Some body."}) == "Some body.");
    CHECK(doc_prompt_text({"x", "A Title", ""}) == "A Title");
}

TEST_CASE("corpus jsonl round trip") {
    TempDir dir("corpus");
    const std::string path = dir.file("corpus.jsonl");
    write_file(path,
               "{\"_id\": \"a\", \"title\": \"First\", \"text\": \"alpha beta\"}\n"
               "{\"_id\": \"b\", \"text\": \"gamma\"}\n"
               "\n");

    DocumentStore store = load_corpus(path);
    REQUIRE(store.size() == 2);
    CHECK(store.at("a").title == "First");
    CHECK(store.at("b").title.empty());
    CHECK(store.at("b").text == "gamma");

    const std::string copy = dir.file("copy.jsonl");
    save_corpus(store, copy);
    DocumentStore reloaded = load_corpus(copy);
    REQUIRE(reloaded.size() == 2);
    CHECK(reloaded.at("a").text == "alpha beta");
    CHECK(reloaded.at("a").title == "First");
}

TEST_CASE("corpus parse errors carry file and line") {
    TempDir dir("corpus_err");
    const std::string path = dir.file("bad.jsonl");

    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_corpus(dir.file("nope.jsonl")), ParseError);
    }
    SUBCASE("broken json") {
        write_file(path, "{\"_id\": \"a\", \"text\": \"ok\"}\n{not json\n");
        CHECK_THROWS_WITH_AS(load_corpus(path), doctest::Contains(":2:"), ParseError);
    }
    SUBCASE("missing id") {
        write_file(path, "{\"text\": \"no id\"}\n");
        CHECK_THROWS_AS(load_corpus(path), ParseError);
    }
    SUBCASE("duplicate id") {
        write_file(path, "{\"_id\": \"a\", \"text\": \"x\"}\n{\"_id\": \"a\", \"text\": \"y\"}\n");
        CHECK_THROWS_AS(load_corpus(path), ParseError);
    }
}

TEST_CASE("queries jsonl preserves order") {
    TempDir dir("queries");
    const std::string path = dir.file("queries.jsonl");
    write_file(path,
               "{\"_id\": \"q2\", \"text\": \"second query\"}\n"
               "{\"_id\": \"q1\", \"text\": \"first query\"}\n");

    const std::vector<Query> queries = load_queries(path);
    REQUIRE(queries.size() == 2);
    CHECK(queries[0].id == "q2");
    CHECK(queries[1].text == "first query");

    write_file(path, "{\"_id\": \"q1\"}\n");
    CHECK_THROWS_AS(load_queries(path), ParseError);
}

TEST_CASE("qrels tsv parsing") {
    TempDir dir("qrels");
    const std::string path = dir.file("qrels.tsv");
    write_file(path,
               "query-id\tcorpus-id\tscore\n"
               "q1\td1\t2\n"
               "q1\td2\t0\n"
               "q2\td1\t1\n");

    Qrels qrels = load_qrels(path);
    CHECK(qrels.grade("q1", "d1") == 2);
    CHECK(qrels.grade("q1", "d2") == 0);
    CHECK(qrels.grade("q1", "unjudged") == 0);
    CHECK(qrels.relevant_count("q1") == 1);
    CHECK(qrels.relevant_count("q2") == 1);
    CHECK(qrels.has_query("q2"));
    CHECK_FALSE(qrels.has_query("q3"));
    CHECK(qrels.size() == 3);
    CHECK(qrels.warnings().empty());

    SUBCASE("duplicate rows overwrite with a warning") {
        write_file(path,
                   "query-id\tcorpus-id\tscore\n"
                   "q1\td1\t1\n"
                   "q1\td1\t3\n");
        Qrels dup = load_qrels(path);
        CHECK(dup.grade("q1", "d1") == 3);
        REQUIRE(dup.warnings().size() == 1);
        CHECK(dup.warnings()[0].find("duplicate") != std::string::npos);
    }
    SUBCASE("malformed grade") {
        write_file(path, "query-id\tcorpus-id\tscore\nq1\td1\ttwo\n");
        CHECK_THROWS_AS(load_qrels(path), ParseError);
    }
    SUBCASE("too few columns") {
        write_file(path, "query-id\tcorpus-id\tscore\nq1\td1\n");
        CHECK_THROWS_AS(load_qrels(path), ParseError);
    }
}

TEST_CASE("run file writing and parsing") {
    TempDir dir("run");
    const std::string path = dir.file("run.trec");

    std::map<std::string, ScoredList> run;
    run["q1"] = {{"docA", 2.5}, {"docB", 1.25}};
    run["q2"] = {{"docC", 0.333244}};
    write_run(run, "mytag", path);

    CHECK(read_file(path) ==
          "q1 Q0 docA 1 2.500000 mytag\n"
          "q1 Q0 docB 2 1.250000 mytag\n"
          "q2 Q0 docC 1 0.333244 mytag\n");

    auto parsed = parse_run(path);
    REQUIRE(parsed.size() == 2);
    REQUIRE(parsed["q1"].size() == 2);
    CHECK(parsed["q1"][0].doc_id == "docA");
    CHECK(parsed["q1"][0].rank == 1);
    CHECK(parsed["q1"][1].score == doctest::Approx(1.25));
    CHECK(parsed["q2"][0].doc_id == "docC");

    SUBCASE("bad rank column") {
        testutil::write_file(path, "q1 Q0 d1 zero 1.0 tag\n");
        CHECK_THROWS_AS(parse_run(path), ParseError);
    }
    SUBCASE("truncated row") {
        testutil::write_file(path, "q1 Q0 d1 1\n");
        CHECK_THROWS_AS(parse_run(path), ParseError);
    }
}
