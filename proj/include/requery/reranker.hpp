#pragma once

#include <functional>
#include <string>
#include <vector>

#include "requery/llm_gateway.hpp"
#include "requery/scored_list.hpp"

namespace requery {

/// Maps a doc id to the passage text shown to the reranker.
using PassageLookup = std::function<std::string(const std::string&)>;

struct RerankConfig {
    int window = 10;
    int step = 5;
    int strong_top = 30;  // phase-2 prefix length
    std::string cheap_model;
    std::string strong_model;

    void validate() const;
};

/// Listwise sliding-window reranker. Windows walk the list tail-first in
/// steps of `step`; each window is permuted by the model and written back
/// before the next (overlapping) window is read, which is what lets a
/// strong document bubble from the tail to the head in one pass.
class Reranker {
  public:
    explicit Reranker(LlmGateway& gateway) : gateway_(gateway) {}

    /// One window: renders the multi-turn ranking prompt and parses the
    /// reply into a 1-based permutation of 1..passages.size(). Malformed
    /// replies are repaired (dedup, drop out-of-range, append missing);
    /// a reply with no indices at all yields identity plus a warning.
    std::vector<int> window_permute(const std::string& query_text,
                                    const std::vector<std::string>& passages,
                                    const std::string& model, std::vector<std::string>& warnings);

    /// Full pass over `list` with one model. Output is a permutation of the
    /// input with fresh descending scores n-1..0. Exactly
    /// floor((n-w)/s)+1 windows when n > w, else one window.
    ScoredList sliding_rerank(const std::string& query_text, const ScoredList& list,
                              const PassageLookup& lookup, int window, int step,
                              const std::string& model, std::vector<std::string>& warnings);

    /// Phase 1 reranks everything with the cheap model; phase 2 reranks the
    /// top min(strong_top, n) with the strong model, tail unchanged.
    ScoredList two_phase_rerank(const std::string& query_text, const ScoredList& list,
                                const PassageLookup& lookup, const RerankConfig& config,
                                std::vector<std::string>& warnings);

    static ChatRequest render_window_prompt(const std::string& model, const std::string& query_text,
                                            const std::vector<std::string>& passages);

    /// Bracketed-integer extraction with repair. n is the window length.
    /// empty_extraction reports whether the reply held no usable index.
    static std::vector<int> parse_permutation(const std::string& content, int n,
                                              bool& empty_extraction);

  private:
    LlmGateway& gateway_;
};

}  // namespace requery
