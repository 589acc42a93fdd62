#pragma once

#include <string>
#include <vector>

#include "requery/llm_gateway.hpp"

namespace requery {

/// The growing rewrite conversation for one query. Rounds only get
/// appended; the rendered prompt for round t extends round t-1's prompt.
class RewriteHistory {
  public:
    struct Round {
        std::string query;
        std::vector<std::string> feedback;  // already truncated texts
    };

    /// max_rounds mirrors the rewrite budget; append_round refuses to grow
    /// past it. char_budget caps each feedback document's length.
    RewriteHistory(std::string topic, std::size_t max_rounds, std::size_t char_budget = 1000);

    /// Adds (q_t, feedback docs). Caller passes at most the configured
    /// number of feedback docs; texts longer than the budget are truncated.
    void append_round(const std::string& query, const std::vector<std::string>& feedback);

    const std::string& topic() const { return topic_; }
    const std::vector<Round>& rounds() const { return rounds_; }
    std::size_t max_rounds() const { return max_rounds_; }

    /// The full rewriter prompt: fixed instruction block, TOPIC line, then
    /// one QUERY #i / TOP RESULTS block per round.
    std::string render_user_message() const;

  private:
    std::string topic_;
    std::size_t max_rounds_;
    std::size_t char_budget_;
    std::vector<Round> rounds_;
};

class Rewriter {
  public:
    /// Rewrites use the strong model with a 20-token output cap.
    Rewriter(LlmGateway& gateway, std::string model, int max_output_tokens = 20);

    ChatRequest render_prompt(const RewriteHistory& history) const;

    /// Returns the next rewrite, parsed from <Rewrite>...</Rewrite> and
    /// trimmed. Throws GatewayError when no usable rewrite can be parsed;
    /// the pipeline treats that as the end of the rewrite loop.
    std::string generate_rewrite(const RewriteHistory& history);

    /// Tag parse with one repair: tagless content is accepted when it is
    /// non-empty and at most 20 whitespace tokens after stripping tags.
    static std::string parse_rewrite(const std::string& content);

  private:
    LlmGateway& gateway_;
    std::string model_;
    int max_output_tokens_;
};

}  // namespace requery
