#include "requery/relevance.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>
#include <thread>

#include "requery/prompts.hpp"
#include "requery/text_util.hpp"

namespace requery {

namespace {

ChatRequest relevance_request(const std::string& model, const std::string& query_text,
                              const std::string& doc_text) {
    std::string user = prompts::kRelevanceTemplate;
    user = replace_all(user, "{query}", query_text);
    user = replace_all(user, "{document}", doc_text);

    ChatRequest request;
    request.model = model;
    request.messages = {{"system", prompts::kAssistantSystem}, {"user", user}};
    request.temperature = 0.0;
    return request;
}

}  // namespace

RelevanceScorer::RelevanceScorer(LlmGateway& gateway, std::string model, int parallelism)
    : gateway_(gateway), model_(std::move(model)), parallelism_(parallelism) {
    if (parallelism_ < 1) throw std::invalid_argument("relevance parallelism must be >= 1");
}

int RelevanceScorer::parse_grade(const std::string& content) {
    constexpr const char* kOpen = "<Score>";
    constexpr const char* kClose = "</Score>";

    const auto open = content.find(kOpen);
    if (open != std::string::npos) {
        const auto start = open + 7;
        const auto close = content.find(kClose, start);
        if (close != std::string::npos) {
            const std::string inner = trim(content.substr(start, close - start));
            try {
                std::size_t used = 0;
                const int grade = std::stoi(inner, &used);
                if (used == inner.size()) {
                    if (grade < 1 || grade > 5) {
                        throw GatewayError("relevance score " + std::to_string(grade) +
                                           " outside [1,5] in reply: " + content);
                    }
                    return grade;
                }
            } catch (const std::invalid_argument&) {
            } catch (const std::out_of_range&) {
            }
        }
    }

    // Repair: accept a lone digit 1-5, i.e. one with no digit neighbors.
    int found = 0;
    int count = 0;
    for (std::size_t i = 0; i < content.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(content[i]))) continue;
        const bool digit_before = i > 0 && std::isdigit(static_cast<unsigned char>(content[i - 1]));
        const bool digit_after =
            i + 1 < content.size() && std::isdigit(static_cast<unsigned char>(content[i + 1]));
        if (digit_before || digit_after) {
            while (i + 1 < content.size() && std::isdigit(static_cast<unsigned char>(content[i + 1])))
                ++i;
            continue;
        }
        if (content[i] >= '1' && content[i] <= '5') {
            found = content[i] - '0';
            ++count;
        }
    }
    if (count == 1) return found;

    throw GatewayError("cannot parse relevance score from reply: " + content);
}

int RelevanceScorer::score(const std::string& query_text, const std::string& doc_id,
                           const std::string& doc_text) {
    const auto key = std::make_pair(query_text, doc_id);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = memo_.find(key);
        if (it != memo_.end()) {
            ++memo_hits_;
            return it->second;
        }
    }

    const ChatResponse response = gateway_.complete(relevance_request(model_, query_text, doc_text));
    const int grade = parse_grade(response.content);

    std::lock_guard<std::mutex> lock(mutex_);
    memo_.emplace(key, grade);
    return grade;
}

long long RelevanceScorer::memo_hits() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return memo_hits_;
}

FilteredList RelevanceScorer::filter(const std::string& query_text, const ScoredList& retrieved,
                                     const DocumentStore& store, int tau) {
    struct Outcome {
        int grade = 0;
        std::string error;
        bool transport = false;
    };
    std::vector<Outcome> outcomes(retrieved.size());

    auto score_one = [&](std::size_t i) {
        const Document* doc = store.lookup(retrieved[i].doc_id);
        if (doc == nullptr) {
            outcomes[i].error = "document " + retrieved[i].doc_id + " not in store";
            return;
        }
        try {
            outcomes[i].grade = score(query_text, doc->id, doc_prompt_text(*doc));
        } catch (const TransportError& e) {
            outcomes[i].error = e.what();
            outcomes[i].transport = true;
        } catch (const GatewayError& e) {
            outcomes[i].error = e.what();
        }
    };

    if (parallelism_ <= 1 || retrieved.size() <= 1) {
        for (std::size_t i = 0; i < retrieved.size(); ++i) score_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= retrieved.size()) return;
                score_one(i);
            }
        };
        std::vector<std::thread> pool;
        const std::size_t n_threads =
            std::min<std::size_t>(static_cast<std::size_t>(parallelism_), retrieved.size());
        pool.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    // A transport-exhausted backend would fail every remaining call too;
    // surface it rather than silently dropping the whole list.
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        if (outcomes[i].transport) throw TransportError(outcomes[i].error);
    }

    FilteredList result;
    for (std::size_t i = 0; i < retrieved.size(); ++i) {
        const auto& entry = retrieved[i];
        if (!outcomes[i].error.empty()) {
            result.dropped.push_back({entry.doc_id, std::nullopt, outcomes[i].error});
        } else if (outcomes[i].grade > tau) {
            result.kept.push_back({entry.doc_id, entry.score, outcomes[i].grade});
        } else {
            result.dropped.push_back({entry.doc_id, outcomes[i].grade, ""});
        }
    }
    return result;
}

ScoredList RelevanceScorer::rank_by_relevance(const std::string& query_text,
                                              const std::vector<RankInput>& docs,
                                              std::vector<std::string>& warnings) {
    struct Row {
        const RankInput* input = nullptr;
        int grade = 0;
    };
    std::vector<Row> rows;
    rows.reserve(docs.size());
    for (const RankInput& doc : docs) {
        try {
            rows.push_back({&doc, score(query_text, doc.doc_id, doc.prompt_text)});
        } catch (const TransportError&) {
            throw;
        } catch (const GatewayError& e) {
            warnings.push_back("relevance ranking dropped " + doc.doc_id + ": " + e.what());
        }
    }

    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        if (a.grade != b.grade) return a.grade > b.grade;
        if (a.input->retriever_score != b.input->retriever_score) {
            return a.input->retriever_score > b.input->retriever_score;
        }
        return a.input->doc_id < b.input->doc_id;
    });

    ScoredList out;
    out.reserve(rows.size());
    for (const Row& row : rows) {
        out.push_back({row.input->doc_id, static_cast<double>(row.grade)});
    }
    return out;
}

}  // namespace requery
