#include <random>

#include "doctest.h"

#include "oracles.hpp"
#include "requery/evaluation.hpp"

using namespace requery;

namespace {

std::map<std::string, int> worked_judgments() {
    return {{"da", 3}, {"db", 2}, {"dc", 0}};
}

}  // namespace

TEST_CASE("ndcg worked example") {
    // Ranking db(2), da(3), dc(0): DCG = 2 + 3/log2(3) = 3.892789...,
    // IDCG = 3 + 2/log2(3) = 4.261859..., quotient 0.913401...
    const ScoredList ranking = {{"db", 3.0}, {"da", 2.0}, {"dc", 1.0}};
    const double got = ndcg_at_k(ranking, worked_judgments(), 3);
    CHECK(got == doctest::Approx(0.9134).epsilon(1e-4));
    CHECK(got == doctest::Approx((2.0 + 3.0 / std::log2(3.0)) / (3.0 + 2.0 / std::log2(3.0)))
                     .epsilon(1e-12));

    // The perfect ordering scores 1.
    const ScoredList ideal = {{"da", 3.0}, {"db", 2.0}, {"dc", 1.0}};
    CHECK(ndcg_at_k(ideal, worked_judgments(), 3) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ndcg edge cases") {
    const std::map<std::string, int> judgments = worked_judgments();
    CHECK(ndcg_at_k({}, judgments, 10) == 0.0);
    CHECK(ndcg_at_k({{"dx", 1.0}}, judgments, 10) == 0.0);      // nothing relevant retrieved
    CHECK(ndcg_at_k({{"da", 1.0}}, {}, 10) == 0.0);             // no judgments at all
    CHECK(ndcg_at_k({{"da", 1.0}}, {{"da", 0}}, 10) == 0.0);    // no positive judgments
    CHECK_THROWS_AS(ndcg_at_k({}, judgments, 0), std::invalid_argument);

    // k = 1 only sees the first entry.
    const ScoredList ranking = {{"db", 2.0}, {"da", 1.0}};
    CHECK(ndcg_at_k(ranking, judgments, 1) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("recall with and without the capped denominator") {
    std::map<std::string, int> judgments;
    for (int i = 0; i < 5; ++i) judgments["rel" + std::to_string(i)] = 1;
    const ScoredList ranking = {{"rel0", 5.0}, {"junk", 4.0}, {"rel1", 3.0}, {"junk2", 2.0}};

    CHECK(recall_at_k(ranking, judgments, 3, false) == doctest::Approx(2.0 / 5.0).epsilon(1e-12));
    CHECK(recall_at_k(ranking, judgments, 3, true) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(recall_at_k(ranking, judgments, 100, false) == doctest::Approx(2.0 / 5.0).epsilon(1e-12));
    CHECK(recall_at_k(ranking, judgments, 100, true) == doctest::Approx(2.0 / 5.0).epsilon(1e-12));
    CHECK(recall_at_k({}, judgments, 10, true) == 0.0);
    CHECK(recall_at_k(ranking, {}, 10, false) == 0.0);
}

TEST_CASE("metrics agree with the brute-force oracle on random instances") {
    std::mt19937 rng(4242);
    std::uniform_int_distribution<int> n_docs(1, 25);
    std::uniform_int_distribution<int> grade(0, 3);
    std::uniform_int_distribution<int> ks(1, 15);

    for (int round = 0; round < 100; ++round) {
        CAPTURE(round);
        const int docs = n_docs(rng);
        std::map<std::string, int> judgments;
        std::vector<std::string> pool;
        for (int d = 0; d < docs; ++d) {
            const std::string id = "d" + std::to_string(d);
            pool.push_back(id);
            const int g = grade(rng);
            if (g > 0 || d % 2 == 0) judgments[id] = g;  // judged, possibly at 0
        }
        std::shuffle(pool.begin(), pool.end(), rng);

        ScoredList ranking;
        std::vector<std::string> ids;
        for (std::size_t i = 0; i < pool.size(); ++i) {
            ranking.push_back({pool[i], static_cast<double>(pool.size() - i)});
            ids.push_back(pool[i]);
        }

        const int k = ks(rng);
        CHECK(ndcg_at_k(ranking, judgments, k) ==
              doctest::Approx(oracles::oracle_ndcg(ids, judgments, k)).epsilon(1e-9));
        CHECK(recall_at_k(ranking, judgments, k, false) ==
              doctest::Approx(oracles::oracle_recall(ids, judgments, k, false)).epsilon(1e-9));
        CHECK(recall_at_k(ranking, judgments, k, true) ==
              doctest::Approx(oracles::oracle_recall(ids, judgments, k, true)).epsilon(1e-9));
    }
}

TEST_CASE("metric spec names") {
    CHECK(MetricSpec{MetricSpec::Kind::Ndcg, 10}.name() == "ndcg@10");
    CHECK(MetricSpec{MetricSpec::Kind::Recall, 100}.name() == "recall@100");
    CHECK(MetricSpec{MetricSpec::Kind::RecallCapped, 5}.name() == "recall_capped@5");
}

TEST_CASE("evaluate_run covers judged queries and flags the gaps") {
    Qrels qrels;
    qrels.set("q1", "d1", 2);
    qrels.set("q1", "d2", 1);
    qrels.set("q2", "d9", 1);   // judged but missing from the run
    qrels.set("q3", "d1", 0);   // judged with no relevant docs

    std::map<std::string, ScoredList> run;
    run["q1"] = {{"d1", 2.0}, {"d3", 1.0}, {"d2", 0.5}};
    run["q3"] = {{"d1", 1.0}};
    run["q9"] = {{"d1", 1.0}};  // not judged at all

    const std::vector<MetricSpec> specs = {{MetricSpec::Kind::Ndcg, 3},
                                           {MetricSpec::Kind::Recall, 2}};
    const EvalReport report = evaluate_run(run, qrels, specs);

    REQUIRE(report.per_query.size() == 3);
    CHECK(report.per_query[0].query_id == "q1");
    CHECK(report.per_query[1].query_id == "q2");
    CHECK(report.per_query[2].query_id == "q3");

    CHECK(report.per_query[1].missing_from_run);
    CHECK(report.per_query[1].values[0] == 0.0);
    CHECK(report.per_query[2].no_relevant);
    CHECK(report.per_query[2].values[0] == 0.0);

    // d1 at rank 1 (grade 2), d2 at rank 3 (grade 1).
    const double q1_ndcg = (2.0 + 1.0 / std::log2(4.0)) / (2.0 + 1.0 / std::log2(3.0));
    CHECK(report.per_query[0].values[0] == doctest::Approx(q1_ndcg).epsilon(1e-12));
    CHECK(report.per_query[0].values[1] == doctest::Approx(0.5).epsilon(1e-12));

    // Means average over all three judged queries.
    CHECK(report.means[0] == doctest::Approx(q1_ndcg / 3.0).epsilon(1e-12));
    CHECK(report.means[1] == doctest::Approx(0.5 / 3.0).epsilon(1e-12));

    bool warned_skip = false;
    bool warned_missing = false;
    bool warned_no_relevant = false;
    for (const std::string& warning : report.warnings) {
        if (warning.find("q9") != std::string::npos) warned_skip = true;
        if (warning.find("q2") != std::string::npos &&
            warning.find("missing") != std::string::npos) {
            warned_missing = true;
        }
        if (warning.find("q3") != std::string::npos &&
            warning.find("no relevant") != std::string::npos) {
            warned_no_relevant = true;
        }
    }
    CHECK(warned_skip);
    CHECK(warned_missing);
    CHECK(warned_no_relevant);
}

TEST_CASE("evaluate_run rejects unsorted input and empty specs") {
    Qrels qrels;
    qrels.set("q1", "d1", 1);
    std::map<std::string, ScoredList> run;
    run["q1"] = {{"d2", 1.0}, {"d1", 2.0}};
    CHECK_THROWS_AS(evaluate_run(run, qrels, {{MetricSpec::Kind::Ndcg, 10}}),
                    std::invalid_argument);
    run["q1"] = {{"d1", 2.0}};
    CHECK_THROWS_AS(evaluate_run(run, qrels, {}), std::invalid_argument);
}

TEST_CASE("report serializations stay parseable") {
    Qrels qrels;
    qrels.set("q1", "d1", 1);
    std::map<std::string, ScoredList> run;
    run["q1"] = {{"d1", 1.0}};
    const EvalReport report =
        evaluate_run(run, qrels, {{MetricSpec::Kind::Ndcg, 10}, {MetricSpec::Kind::Recall, 100}});

    const std::string json = report.to_json();
    CHECK(json.find("\"ndcg@10\": 1.0") != std::string::npos);
    CHECK(json.find("\"query_count\": 1") != std::string::npos);

    const std::string table = report.to_table();
    CHECK(table.find("ndcg@10") != std::string::npos);
    CHECK(table.find("recall@100") != std::string::npos);
    CHECK(table.find("mean") != std::string::npos);
}
