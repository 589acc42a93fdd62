#include "requery/rewriter.hpp"

#include <stdexcept>

#include "requery/prompts.hpp"
#include "requery/text_util.hpp"

namespace requery {

RewriteHistory::RewriteHistory(std::string topic, std::size_t max_rounds, std::size_t char_budget)
    : topic_(std::move(topic)), max_rounds_(max_rounds), char_budget_(char_budget) {
    if (topic_.empty()) throw std::invalid_argument("rewrite topic must be non-empty");
    if (max_rounds_ == 0) throw std::invalid_argument("rewrite history needs max_rounds >= 1");
}

void RewriteHistory::append_round(const std::string& query, const std::vector<std::string>& feedback) {
    if (rounds_.size() >= max_rounds_) {
        throw std::logic_error("rewrite history already holds " + std::to_string(max_rounds_) +
                               " rounds");
    }
    Round round;
    round.query = query;
    round.feedback.reserve(feedback.size());
    for (const std::string& doc : feedback) {
        round.feedback.push_back(truncate_chars(doc, char_budget_));
    }
    rounds_.push_back(std::move(round));
}

std::string RewriteHistory::render_user_message() const {
    std::string out = prompts::kRewriteHeader;
    out += topic_;
    for (std::size_t i = 0; i < rounds_.size(); ++i) {
        out += "\n\nQUERY #" + std::to_string(i + 1) + ": " + rounds_[i].query;
        out += "\n\nTOP RESULTS:";
        for (std::size_t j = 0; j < rounds_[i].feedback.size(); ++j) {
            out += "\n\n" + std::to_string(j + 1) + ". " + rounds_[i].feedback[j];
        }
    }
    return out;
}

Rewriter::Rewriter(LlmGateway& gateway, std::string model, int max_output_tokens)
    : gateway_(gateway), model_(std::move(model)), max_output_tokens_(max_output_tokens) {
    if (max_output_tokens_ < 1) throw std::invalid_argument("rewrite token cap must be >= 1");
}

ChatRequest Rewriter::render_prompt(const RewriteHistory& history) const {
    if (history.rounds().empty()) {
        throw std::logic_error("cannot render a rewrite prompt with no rounds");
    }
    ChatRequest request;
    request.model = model_;
    request.messages = {{"system", prompts::kAssistantSystem},
                        {"user", history.render_user_message()}};
    request.temperature = 0.0;
    request.max_output_tokens = max_output_tokens_;
    return request;
}

std::string Rewriter::parse_rewrite(const std::string& content) {
    constexpr const char* kOpen = "<Rewrite>";
    constexpr const char* kClose = "</Rewrite>";

    const auto open = content.find(kOpen);
    if (open != std::string::npos) {
        const auto start = open + 9;
        const auto close = content.find(kClose, start);
        if (close != std::string::npos) {
            const std::string inner = trim(content.substr(start, close - start));
            if (!inner.empty()) return inner;
            throw GatewayError("empty rewrite in reply: " + content);
        }
    }

    // Repair: some replies drop the tags (or one of them) but are otherwise
    // a plausible short rewrite.
    std::string stripped = content;
    stripped = replace_all(stripped, kOpen, " ");
    stripped = replace_all(stripped, kClose, " ");
    stripped = trim(stripped);
    if (!stripped.empty() && whitespace_token_count(stripped) <= 20) return stripped;

    throw GatewayError("cannot parse rewrite from reply: " + content);
}

std::string Rewriter::generate_rewrite(const RewriteHistory& history) {
    const ChatResponse response = gateway_.complete(render_prompt(history));
    return parse_rewrite(response.content);
}

}  // namespace requery
