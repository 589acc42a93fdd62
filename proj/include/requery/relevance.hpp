#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "requery/corpus.hpp"
#include "requery/llm_gateway.hpp"
#include "requery/scored_list.hpp"

namespace requery {

/// A document that cleared the threshold, in retrieval order.
struct KeptEntry {
    std::string doc_id;
    double retriever_score = 0.0;
    int grade = 0;  // 1..5
};

struct DroppedEntry {
    std::string doc_id;
    std::optional<int> grade;  // empty when scoring failed
    std::string error;         // empty when dropped by threshold
};

/// Partition of a retrieved list: kept holds grade > tau, dropped holds the
/// rest (below threshold or errored). kept preserves retrieval order.
struct FilteredList {
    std::vector<KeptEntry> kept;
    std::vector<DroppedEntry> dropped;
};

struct RankInput {
    std::string doc_id;
    std::string prompt_text;
    double retriever_score = 0.0;  // from the doc's first retrieval
};

/// Ordinal relevance scoring through the gateway, with a per-(query, doc)
/// memo so a document retrieved by several rewrites is scored once.
class RelevanceScorer {
  public:
    RelevanceScorer(LlmGateway& gateway, std::string model, int parallelism = 1);

    /// Grade in [1,5] for the document against query_text. doc_id is the
    /// memo key together with the query text. Throws GatewayError on
    /// transport failure or an unparseable/out-of-range reply.
    int score(const std::string& query_text, const std::string& doc_id,
              const std::string& doc_text);

    /// Scores every entry of `retrieved` against query_text and splits at
    /// grade > tau. Per-document scoring errors become dropped entries;
    /// transport exhaustion still propagates so the caller can abort.
    FilteredList filter(const std::string& query_text, const ScoredList& retrieved,
                        const DocumentStore& store, int tau);

    /// Orders docs by grade desc, then retriever score desc, then doc id
    /// asc. The returned scores are the grades. Docs whose scoring failed
    /// are left out, one warning each.
    ScoredList rank_by_relevance(const std::string& query_text, const std::vector<RankInput>& docs,
                                 std::vector<std::string>& warnings);

    /// Parses "<Score>g</Score>"; fallback is a lone digit 1-5 in the text.
    /// Out-of-range or absent grades throw GatewayError with the content.
    static int parse_grade(const std::string& content);

    long long memo_hits() const;

  private:
    LlmGateway& gateway_;
    std::string model_;
    int parallelism_;

    mutable std::mutex mutex_;
    std::map<std::pair<std::string, std::string>, int> memo_;
    long long memo_hits_ = 0;
};

}  // namespace requery
