#include "requery/reranker.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

#include "requery/prompts.hpp"
#include "requery/text_util.hpp"

namespace requery {

void RerankConfig::validate() const {
    if (step < 1) throw std::invalid_argument("rerank step must be >= 1");
    if (window < step) throw std::invalid_argument("rerank window must be >= step");
    if (strong_top < 1) throw std::invalid_argument("rerank strong_top must be >= 1");
    if (cheap_model.empty() || strong_model.empty()) {
        throw std::invalid_argument("rerank needs both model names");
    }
}

ChatRequest Reranker::render_window_prompt(const std::string& model, const std::string& query_text,
                                           const std::vector<std::string>& passages) {
    const std::string num = std::to_string(passages.size());

    std::string opening = prompts::kRerankOpening;
    opening = replace_all(opening, "{num}", num);
    opening = replace_all(opening, "{query}", query_text);

    ChatRequest request;
    request.model = model;
    request.temperature = 0.0;
    request.messages.push_back({"system", prompts::kRerankSystem});
    request.messages.push_back({"user", std::move(opening)});
    request.messages.push_back({"assistant", prompts::kRerankOpeningReply});
    for (std::size_t i = 0; i < passages.size(); ++i) {
        const std::string id = std::to_string(i + 1);
        request.messages.push_back({"user", "[" + id + "] " + passages[i]});
        request.messages.push_back({"assistant", "Received passage [" + id + "]"});
    }
    request.messages.push_back({"user", replace_all(prompts::kRerankClosing, "{num}", num)});
    return request;
}

std::vector<int> Reranker::parse_permutation(const std::string& content, int n,
                                             bool& empty_extraction) {
    std::vector<int> order;
    std::vector<bool> seen(static_cast<std::size_t>(n) + 1, false);
    bool any_index = false;

    for (std::size_t i = 0; i < content.size(); ++i) {
        if (content[i] != '[') continue;
        std::size_t j = i + 1;
        while (j < content.size() && std::isdigit(static_cast<unsigned char>(content[j]))) ++j;
        if (j == i + 1 || j >= content.size() || content[j] != ']') continue;
        any_index = true;
        int value = 0;
        try {
            value = std::stoi(content.substr(i + 1, j - i - 1));
        } catch (const std::out_of_range&) {
            continue;
        }
        if (value < 1 || value > n || seen[static_cast<std::size_t>(value)]) continue;
        seen[static_cast<std::size_t>(value)] = true;
        order.push_back(value);
        i = j;
    }

    empty_extraction = !any_index;
    for (int v = 1; v <= n; ++v) {
        if (!seen[static_cast<std::size_t>(v)]) order.push_back(v);
    }
    return order;
}

std::vector<int> Reranker::window_permute(const std::string& query_text,
                                          const std::vector<std::string>& passages,
                                          const std::string& model,
                                          std::vector<std::string>& warnings) {
    if (passages.empty()) throw std::invalid_argument("window_permute needs at least one passage");

    const ChatResponse response =
        gateway_.complete(render_window_prompt(model, query_text, passages));

    bool empty_extraction = false;
    std::vector<int> order =
        parse_permutation(response.content, static_cast<int>(passages.size()), empty_extraction);
    if (empty_extraction) {
        warnings.push_back("rerank reply had no usable indices, keeping window order: " +
                           response.content.substr(0, 80));
    }
    return order;
}

ScoredList Reranker::sliding_rerank(const std::string& query_text, const ScoredList& list,
                                    const PassageLookup& lookup, int window, int step,
                                    const std::string& model, std::vector<std::string>& warnings) {
    if (list.empty()) throw std::invalid_argument("sliding_rerank needs a non-empty list");
    if (step < 1 || window < step) throw std::invalid_argument("need 1 <= step <= window");

    std::vector<std::string> ids;
    ids.reserve(list.size());
    for (const ScoredEntry& entry : list) ids.push_back(entry.doc_id);

    const int n = static_cast<int>(ids.size());
    std::vector<int> starts;
    if (n <= window) {
        starts.push_back(0);
    } else {
        for (int start = n - window; start >= 0; start -= step) starts.push_back(start);
    }

    for (int start : starts) {
        const int len = std::min(window, n - start);
        std::vector<std::string> passages;
        passages.reserve(static_cast<std::size_t>(len));
        for (int i = 0; i < len; ++i) passages.push_back(lookup(ids[static_cast<std::size_t>(start + i)]));

        const std::vector<int> order = window_permute(query_text, passages, model, warnings);

        std::vector<std::string> permuted;
        permuted.reserve(static_cast<std::size_t>(len));
        for (int idx : order) permuted.push_back(ids[static_cast<std::size_t>(start + idx - 1)]);
        for (int i = 0; i < len; ++i) ids[static_cast<std::size_t>(start + i)] = std::move(permuted[static_cast<std::size_t>(i)]);
    }

    ScoredList out;
    out.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        out.push_back({ids[i], static_cast<double>(ids.size() - 1 - i)});
    }
    return out;
}

ScoredList Reranker::two_phase_rerank(const std::string& query_text, const ScoredList& list,
                                      const PassageLookup& lookup, const RerankConfig& config,
                                      std::vector<std::string>& warnings) {
    config.validate();
    if (list.empty()) throw std::invalid_argument("two_phase_rerank needs a non-empty list");

    ScoredList phase1 = sliding_rerank(query_text, list, lookup, config.window, config.step,
                                       config.cheap_model, warnings);

    const std::size_t head_len =
        std::min<std::size_t>(static_cast<std::size_t>(config.strong_top), phase1.size());
    ScoredList head(phase1.begin(), phase1.begin() + static_cast<std::ptrdiff_t>(head_len));
    head = sliding_rerank(query_text, head, lookup, config.window, config.step,
                          config.strong_model, warnings);

    ScoredList out;
    out.reserve(phase1.size());
    for (const ScoredEntry& entry : head) out.push_back(entry);
    for (std::size_t i = head_len; i < phase1.size(); ++i) out.push_back(phase1[i]);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].score = static_cast<double>(out.size() - 1 - i);
    }
    return out;
}

}  // namespace requery
