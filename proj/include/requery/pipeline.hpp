#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "requery/corpus.hpp"
#include "requery/inverted_index.hpp"
#include "requery/llm_gateway.hpp"
#include "requery/relevance.hpp"
#include "requery/reranker.hpp"
#include "requery/rewriter.hpp"
#include "requery/scored_list.hpp"

namespace requery {

enum class FeedbackSource { Retriever, Relevance };
enum class RelevanceTarget { Original, Rewrite };

struct PipelineConfig {
    int n = 100;             // output size
    int max_rewrites = 5;    // total queries tried per input, the original included
    int feedback_size = 3;   // docs fed back into the rewriter prompt per round
    int tau = 1;             // keep docs with relevance grade > tau
    int window = 10;
    int step = 5;
    int strong_top = 30;
    bool feedback_enabled = true;
    FeedbackSource feedback_source = FeedbackSource::Retriever;
    RelevanceTarget relevance_target = RelevanceTarget::Original;
    std::string cheap_model = "gpt-3.5-turbo";
    std::string strong_model = "gpt-4";
    bool final_rerank = true;
    std::size_t feedback_char_budget = 1000;

    void validate() const;
};

struct IterationTrace {
    int t = 0;
    std::string query_used;
    bool duplicate_skipped = false;  // query text seen before; retrieval reused
    ScoredList retrieved;
    std::vector<KeptEntry> kept;
    std::vector<DroppedEntry> dropped;
    int merge_duplicates = 0;
    std::size_t merged_size = 0;
    std::vector<std::string> feedback_doc_ids;
    std::string rewrite_prompt_fnv1a64;  // hash of the rendered user message
    std::string generated_rewrite;
};

struct RunTrace {
    std::string query_id;
    std::string query_text;
    std::vector<IterationTrace> iterations;
    std::vector<std::string> pre_rerank;   // after relevance ordering + truncation
    std::vector<std::string> post_rerank;  // empty when final_rerank is off
    std::vector<std::string> warnings;
    int duplicate_rewrites = 0;
    std::map<std::string, ModelUsage> usage_delta;  // this query's gateway traffic

    /// One line of JSON, keys sorted; no timestamps, so reruns byte-match.
    std::string to_json_line() const;
};

struct RankedOutput {
    std::string query_id;
    ScoredList ranked;  // distinct ids, length <= config.n
};

struct BatchFailure {
    std::string query_id;
    std::string error;
    bool transport = false;
};

struct BatchResult {
    std::map<std::string, ScoredList> run;
    std::vector<RunTrace> traces;  // query input order, failed queries included
    std::vector<BatchFailure> failures;
};

struct PipelineComponents {
    const InvertedIndex& index;
    const DocumentStore& store;
    LlmGateway& gateway;
    RelevanceScorer& relevance;
    Rewriter& rewriter;
    Reranker& reranker;
};

/// The retrieve -> filter -> merge -> rewrite loop with the final
/// relevance ordering and two-phase rerank.
class Pipeline {
  public:
    Pipeline(PipelineComponents components, PipelineConfig config);

    /// Runs the full loop for one query. Transport exhaustion and index
    /// errors propagate; everything milder degrades per component contract
    /// and lands in the trace.
    std::pair<RankedOutput, RunTrace> run_query(const Query& query);

    /// Queries run independently (concurrently up to `parallelism`); one
    /// query failing is recorded and does not stop the rest.
    BatchResult run_batch(const std::vector<Query>& queries, int parallelism = 1);

    const PipelineConfig& config() const { return config_; }

  private:
    PipelineComponents components_;
    PipelineConfig config_;
};

}  // namespace requery
