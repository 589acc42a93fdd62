#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "requery/corpus.hpp"
#include "requery/scored_list.hpp"

namespace requery {

/// nDCG@k with linear gain rel_i / log2(i + 1), ranks starting at 1.
/// The ideal DCG uses all positively judged documents for the query,
/// not just the retrieved ones. Queries with no relevant documents
/// score 0; callers that need to distinguish that case use EvalReport.
double ndcg_at_k(const ScoredList& ranking, const std::map<std::string, int>& judgments, int k);

/// Fraction of relevant documents (grade > 0) found in the top k.
/// With capped = true the denominator is min(|relevant|, k).
double recall_at_k(const ScoredList& ranking, const std::map<std::string, int>& judgments, int k,
                   bool capped);

struct MetricSpec {
    enum class Kind { Ndcg, Recall, RecallCapped };
    Kind kind = Kind::Ndcg;
    int k = 10;

    std::string name() const;
};

struct QueryEval {
    std::string query_id;
    std::vector<double> values;       // parallel to the metric list
    bool no_relevant = false;         // query had no grade > 0 judgments
    bool missing_from_run = false;    // judged query absent from the run
};

struct EvalReport {
    std::vector<MetricSpec> specs;
    std::vector<QueryEval> per_query;  // every judged query, sorted by id
    std::vector<double> means;         // parallel to specs, mean over per_query
    std::vector<std::string> warnings;

    std::string to_json() const;
    std::string to_table() const;
};

/// Scores a run against qrels. Every judged query contributes to the
/// means: queries missing from the run and queries with no relevant
/// documents both count as 0 on every metric (and are flagged).
/// Run-only queries with no judgments are skipped with a warning.
EvalReport evaluate_run(const std::map<std::string, ScoredList>& run, const Qrels& qrels,
                        const std::vector<MetricSpec>& specs);

}  // namespace requery
