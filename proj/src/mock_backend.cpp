#include "requery/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "requery/corpus.hpp"
#include "requery/text_util.hpp"

namespace requery {

namespace {

std::set<std::string> simple_tokens(const std::string& text) {
    std::set<std::string> out;
    std::string current;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            current.push_back(static_cast<char>(std::tolower(c)));
        } else if (!current.empty()) {
            out.insert(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.insert(std::move(current));
    return out;
}

/// Extracts the text between `label` and the next blank line (or the end).
std::string section_after(const std::string& text, const std::string& label) {
    const auto start = text.find(label);
    if (start == std::string::npos) {
        throw UnhandledPromptError("mock cannot find \"" + label + "\" in prompt");
    }
    const auto value_start = start + label.size();
    const auto end = text.find("\n\n", value_start);
    return end == std::string::npos ? text.substr(value_start)
                                    : text.substr(value_start, end - value_start);
}

std::map<std::string, std::vector<std::string>> parse_script_map(const nlohmann::json& obj,
                                                                 const std::string& where) {
    if (!obj.is_object()) throw ParseError(where + " must be an object of topic -> list");
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [topic, list] : obj.items()) {
        if (!list.is_array()) throw ParseError(where + "[" + topic + "] must be an array");
        for (const auto& item : list) {
            if (!item.is_string()) throw ParseError(where + "[" + topic + "] must hold strings");
            out[topic].push_back(item.get<std::string>());
        }
    }
    return out;
}

}  // namespace

MockRules MockRules::from_json_string(const std::string& text) {
    nlohmann::json root = nlohmann::json::parse(text, nullptr, false);
    if (root.is_discarded() || !root.is_object()) {
        throw ParseError("mock rules: not a JSON object");
    }

    MockRules rules;
    if (root.contains("relevance")) {
        const auto& rel = root["relevance"];
        const std::string mode = rel.value("mode", "");
        if (mode == "token_overlap") {
            rules.relevance_mode = RelevanceMode::TokenOverlap;
        } else if (mode == "marker") {
            rules.relevance_mode = RelevanceMode::Marker;
            rules.relevance_marker = rel.value("marker", "");
            rules.marker_hit = rel.value("hit", 5);
            rules.marker_miss = rel.value("miss", 1);
            if (rules.relevance_marker.empty()) {
                throw ParseError("mock rules: relevance marker mode needs a marker");
            }
        } else {
            throw ParseError("mock rules: unknown relevance mode \"" + mode + "\"");
        }
    }

    if (root.contains("rewrite")) {
        const auto& rw = root["rewrite"];
        const std::string mode = rw.value("mode", "");
        if (mode == "script") {
            rules.rewrite_mode = RewriteMode::Script;
            rules.scripts = parse_script_map(rw.value("scripts", nlohmann::json::object()),
                                             "mock rules: rewrite.scripts");
        } else if (mode == "feedback_gated") {
            rules.rewrite_mode = RewriteMode::FeedbackGated;
            rules.with_feedback = parse_script_map(
                rw.value("with_feedback", nlohmann::json::object()),
                "mock rules: rewrite.with_feedback");
            rules.without_feedback = parse_script_map(
                rw.value("without_feedback", nlohmann::json::object()),
                "mock rules: rewrite.without_feedback");
        } else {
            throw ParseError("mock rules: unknown rewrite mode \"" + mode + "\"");
        }
    }

    if (root.contains("rerank")) {
        const auto& rr = root["rerank"];
        const std::string mode = rr.value("mode", "");
        if (mode != "markers") {
            throw ParseError("mock rules: unknown rerank mode \"" + mode + "\"");
        }
        rules.rerank_mode = RerankMode::Markers;
        const auto& grades = rr.value("grades", nlohmann::json::object());
        if (!grades.is_object()) throw ParseError("mock rules: rerank.grades must be an object");
        for (const auto& [marker, grade] : grades.items()) {
            if (!grade.is_number_integer()) {
                throw ParseError("mock rules: rerank grade for \"" + marker + "\" must be an integer");
            }
            rules.rerank_grades[marker] = grade.get<int>();
        }
    }

    if (root.contains("overrides")) {
        if (!root["overrides"].is_array()) throw ParseError("mock rules: overrides must be an array");
        for (const auto& entry : root["overrides"]) {
            MockOverride ov;
            ov.contains = entry.value("contains", "");
            ov.reply = entry.value("reply", "");
            if (ov.contains.empty()) {
                throw ParseError("mock rules: override needs a non-empty \"contains\"");
            }
            rules.overrides.push_back(std::move(ov));
        }
    }
    return rules;
}

MockRules MockRules::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open mock rules file");
    std::stringstream buffer;
    buffer << in.rdbuf();
    try {
        return from_json_string(buffer.str());
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what());
    }
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
    if (request.messages.empty()) throw UnhandledPromptError("mock got an empty message list");

    ChatResponse response;
    response.content = reply_for(request);
    for (const ChatMessage& m : request.messages) {
        response.input_tokens += static_cast<long long>(whitespace_token_count(m.content));
    }
    response.output_tokens = static_cast<long long>(whitespace_token_count(response.content));
    return response;
}

std::string MockBackend::reply_for(const ChatRequest& request) const {
    std::string all;
    for (const ChatMessage& m : request.messages) {
        all += m.content;
        all += '\n';
    }
    for (const MockOverride& ov : rules_.overrides) {
        if (all.find(ov.contains) != std::string::npos) return ov.reply;
    }

    const std::string& system = request.messages.front().content;
    if (system.rfind("You are RankGPT", 0) == 0) return rerank_reply(request);

    // Single-user-message prompts: find the first user message.
    std::string user;
    for (const ChatMessage& m : request.messages) {
        if (m.role == "user") {
            user = m.content;
            break;
        }
    }
    if (user.rfind("Given a QUERY and a DOCUMENT", 0) == 0) return relevance_reply(user);
    if (user.rfind("I am using a search engine", 0) == 0) return rewrite_reply(user);

    throw UnhandledPromptError("mock has no rule for prompt starting: " + user.substr(0, 80));
}

std::string MockBackend::relevance_reply(const std::string& user) const {
    const std::string query = section_after(user, "\n\nQUERY: ");
    const auto doc_start = user.find("\n\nDOCUMENT: ");
    if (doc_start == std::string::npos) {
        throw UnhandledPromptError("mock relevance prompt lacks a DOCUMENT section");
    }
    const std::string document = user.substr(doc_start + 12);

    int grade = 0;
    switch (rules_.relevance_mode) {
        case MockRules::RelevanceMode::Off:
            throw UnhandledPromptError("mock has no relevance rule configured");
        case MockRules::RelevanceMode::TokenOverlap: {
            const auto q = simple_tokens(query);
            const auto d = simple_tokens(document);
            int shared = 0;
            for (const std::string& tok : q) shared += d.count(tok) ? 1 : 0;
            grade = std::min(shared, 4) + 1;
            break;
        }
        case MockRules::RelevanceMode::Marker:
            grade = document.find(rules_.relevance_marker) != std::string::npos ? rules_.marker_hit
                                                                                : rules_.marker_miss;
            break;
    }
    return "<Score>" + std::to_string(grade) + "</Score>";
}

std::string MockBackend::rewrite_reply(const std::string& user) const {
    const std::string topic = section_after(user, "\n\nTOPIC: ");

    std::size_t rounds = 0;
    for (std::size_t pos = user.find("\n\nQUERY #"); pos != std::string::npos;
         pos = user.find("\n\nQUERY #", pos + 1)) {
        ++rounds;
    }
    if (rounds == 0) {
        throw UnhandledPromptError("mock rewrite prompt has no QUERY rounds");
    }

    const std::map<std::string, std::vector<std::string>>* scripts = nullptr;
    switch (rules_.rewrite_mode) {
        case MockRules::RewriteMode::Off:
            throw UnhandledPromptError("mock has no rewrite rule configured");
        case MockRules::RewriteMode::Script:
            scripts = &rules_.scripts;
            break;
        case MockRules::RewriteMode::FeedbackGated: {
            const auto last_results = user.rfind("TOP RESULTS:");
            const bool has_feedback = last_results != std::string::npos &&
                                      user.find("1. ", last_results) != std::string::npos;
            scripts = has_feedback ? &rules_.with_feedback : &rules_.without_feedback;
            break;
        }
    }

    auto it = scripts->find(topic);
    if (it == scripts->end()) {
        throw UnhandledPromptError("mock has no rewrite script for topic \"" + topic + "\"");
    }
    if (rounds - 1 >= it->second.size()) {
        throw UnhandledPromptError("mock rewrite script for \"" + topic + "\" exhausted at round " +
                                   std::to_string(rounds));
    }
    return "<Rewrite>" + it->second[rounds - 1] + "</Rewrite>";
}

std::string MockBackend::rerank_reply(const ChatRequest& request) const {
    if (rules_.rerank_mode == MockRules::RerankMode::Off) {
        throw UnhandledPromptError("mock has no rerank rule configured");
    }

    // Passage messages look like "[<i>] <text>".
    std::vector<std::pair<int, std::string>> passages;
    for (const ChatMessage& m : request.messages) {
        if (m.role != "user" || m.content.empty() || m.content[0] != '[') continue;
        const auto close = m.content.find(']');
        if (close == std::string::npos) continue;
        try {
            const int id = std::stoi(m.content.substr(1, close - 1));
            passages.emplace_back(id, m.content.substr(close + 1));
        } catch (const std::exception&) {
            continue;  // the opening "query:" message is not a passage
        }
    }
    if (passages.empty()) {
        throw UnhandledPromptError("mock rerank prompt contains no passages");
    }

    std::vector<std::pair<int, int>> graded;  // (grade, id)
    for (const auto& [id, text] : passages) {
        int grade = 0;
        for (const auto& [marker, marker_grade] : rules_.rerank_grades) {
            if (text.find(marker) != std::string::npos) {
                grade = marker_grade;
                break;
            }
        }
        graded.emplace_back(grade, id);
    }
    std::stable_sort(graded.begin(), graded.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });

    std::string reply;
    for (std::size_t i = 0; i < graded.size(); ++i) {
        if (i > 0) reply += " > ";
        reply += "[" + std::to_string(graded[i].second) + "]";
    }
    return reply;
}

}  // namespace requery
