#pragma once

#include <map>
#include <string>
#include <vector>

#include "requery/llm_gateway.hpp"

namespace requery {

/// Fixed reply for any prompt whose concatenated messages contain a
/// substring. Checked before the regular rules, in listed order.
struct MockOverride {
    std::string contains;
    std::string reply;
};

/// Behavior table for MockBackend. Prompts are recognized by their fixed
/// template prefixes; a recognized prompt whose section is not configured
/// (and any unrecognized prompt) raises UnhandledPromptError.
struct MockRules {
    enum class RelevanceMode { Off, TokenOverlap, Marker };
    enum class RewriteMode { Off, Script, FeedbackGated };
    enum class RerankMode { Off, Markers };

    // Relevance: TokenOverlap buckets the number of distinct shared
    // query/document tokens as 0,1,2,3,>=4 -> grades 1..5. Marker grades
    // marker_hit when the document contains relevance_marker, else marker_miss.
    RelevanceMode relevance_mode = RelevanceMode::Off;
    std::string relevance_marker;
    int marker_hit = 5;
    int marker_miss = 1;

    // Rewrite: Script replays scripts[topic][round]; round counts the
    // "QUERY #" blocks already in the prompt, so round r asks for rewrite
    // r+1. FeedbackGated picks with_feedback when the latest TOP RESULTS
    // block is non-empty, else without_feedback.
    RewriteMode rewrite_mode = RewriteMode::Off;
    std::map<std::string, std::vector<std::string>> scripts;
    std::map<std::string, std::vector<std::string>> with_feedback;
    std::map<std::string, std::vector<std::string>> without_feedback;

    // Rerank: each passage takes the grade of the first matching marker
    // substring (0 when none). Passages are ordered by grade, descending,
    // ties keeping prompt order.
    RerankMode rerank_mode = RerankMode::Off;
    std::map<std::string, int> rerank_grades;

    std::vector<MockOverride> overrides;

    static MockRules from_json_string(const std::string& text);
    static MockRules from_json_file(const std::string& path);
};

/// Deterministic stand-in for the chat backend. Token counts are
/// whitespace-token counts of the prompt and of the reply.
class MockBackend : public ChatBackend {
  public:
    explicit MockBackend(MockRules rules) : rules_(std::move(rules)) {}
    ChatResponse complete(const ChatRequest& request) override;

  private:
    std::string reply_for(const ChatRequest& request) const;
    std::string relevance_reply(const std::string& user) const;
    std::string rewrite_reply(const std::string& user) const;
    std::string rerank_reply(const ChatRequest& request) const;

    MockRules rules_;
};

}  // namespace requery
