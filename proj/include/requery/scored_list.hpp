#pragma once

#include <string>
#include <vector>

namespace requery {

/// One (document id, score) pair in a ranked list.
struct ScoredEntry {
    std::string doc_id;
    double score = 0.0;
};

/// Ordered list of scored documents. The currency between retrieval,
/// filtering, and re-ranking: scores non-increasing, doc ids distinct.
using ScoredList = std::vector<ScoredEntry>;

inline bool is_sorted_by_score_desc(const ScoredList& list) {
    for (std::size_t i = 1; i < list.size(); ++i) {
        if (list[i - 1].score < list[i].score) return false;
    }
    return true;
}

}  // namespace requery
