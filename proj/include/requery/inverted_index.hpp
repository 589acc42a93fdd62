#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "requery/corpus.hpp"
#include "requery/scored_list.hpp"
#include "requery/tokenizer.hpp"

namespace requery {

struct Posting {
    std::uint32_t doc = 0;  // ordinal into doc_ids
    std::uint32_t tf = 0;
};

/// BM25 inverted index. Immutable after build; concurrent searches are
/// safe. Persisted format is described in docs/index-format.md.
class InvertedIndex {
  public:
    /// Indexes title + " " + text of every document in the store.
    static InvertedIndex build(const DocumentStore& store, const IndexParams& params);

    /// Top-k documents by BM25:
    ///   score(q,d) = sum over t in q∩d of idf(t) * tf / (tf + k1*(1 - b + b*|d|/avgdl))
    ///   idf(t)     = ln(1 + (N - df + 0.5) / (df + 0.5))
    /// Ties broken by ascending doc id. Fewer than k returned when fewer match.
    ScoredList search(const std::string& query_text, int k) const;

    std::size_t doc_count() const { return doc_ids_.size(); }
    double avg_doc_length() const { return avgdl_; }
    std::size_t term_count() const { return postings_.size(); }
    const IndexParams& params() const { return params_; }
    const std::vector<std::string>& doc_ids() const { return doc_ids_; }
    const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }

    std::uint32_t doc_frequency(const std::string& term) const;
    const std::vector<Posting>* postings_for(const std::string& term) const;

    void save(const std::string& path) const;
    static InvertedIndex load(const std::string& path);

  private:
    IndexParams params_;
    std::vector<std::string> doc_ids_;        // ordinal -> external id
    std::vector<std::uint32_t> doc_lengths_;  // ordinal -> analyzed token count
    double avgdl_ = 0.0;
    std::map<std::string, std::vector<Posting>> postings_;
};

}  // namespace requery
