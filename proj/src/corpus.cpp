#include "requery/corpus.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace requery {

namespace {

using nlohmann::json;

std::ifstream open_for_read(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    return in;
}

[[noreturn]] void fail_line(const std::string& path, std::size_t line_no, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
}

std::string require_string_field(const json& obj, const char* field, const std::string& path,
                                 std::size_t line_no) {
    auto it = obj.find(field);
    if (it == obj.end()) fail_line(path, line_no, std::string("missing field `") + field + "`");
    if (!it->is_string()) fail_line(path, line_no, std::string("field `") + field + "` must be a string");
    return it->get<std::string>();
}

}  // namespace

void DocumentStore::add(Document doc) {
    if (doc.id.empty()) throw ParseError("document id must be non-empty");
    auto [it, inserted] = by_id_.emplace(doc.id, docs_.size());
    if (!inserted) throw ParseError("duplicate document id: " + doc.id);
    docs_.push_back(std::move(doc));
}

const Document* DocumentStore::lookup(const std::string& id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &docs_[it->second];
}

const Document& DocumentStore::at(const std::string& id) const {
    const Document* doc = lookup(id);
    if (!doc) throw std::out_of_range("unknown document id: " + id);
    return *doc;
}

void Qrels::set(const std::string& query_id, const std::string& doc_id, int grade) {
    if (grade < 0) throw ParseError("relevance grade must be non-negative");
    judgments_[query_id][doc_id] = grade;
}

int Qrels::grade(const std::string& query_id, const std::string& doc_id) const {
    auto q = judgments_.find(query_id);
    if (q == judgments_.end()) return 0;
    auto d = q->second.find(doc_id);
    return d == q->second.end() ? 0 : d->second;
}

std::size_t Qrels::relevant_count(const std::string& query_id) const {
    auto q = judgments_.find(query_id);
    if (q == judgments_.end()) return 0;
    std::size_t n = 0;
    for (const auto& [doc, grade] : q->second)
        if (grade > 0) ++n;
    return n;
}

bool Qrels::has_query(const std::string& query_id) const {
    return judgments_.count(query_id) > 0;
}

std::size_t Qrels::size() const {
    std::size_t n = 0;
    for (const auto& [q, docs] : judgments_) n += docs.size();
    return n;
}

DocumentStore load_corpus(const std::string& path) {
    std::ifstream in = open_for_read(path);
    DocumentStore store;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            fail_line(path, line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) fail_line(path, line_no, "expected a JSON object");
        Document doc;
        doc.id = require_string_field(obj, "_id", path, line_no);
        if (doc.id.empty()) fail_line(path, line_no, "field `_id` must be non-empty");
        if (auto it = obj.find("title"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) fail_line(path, line_no, "field `title` must be a string");
            doc.title = it->get<std::string>();
        }
        doc.text = require_string_field(obj, "text", path, line_no);
        try {
            store.add(std::move(doc));
        } catch (const ParseError& e) {
            fail_line(path, line_no, e.what());
        }
    }
    return store;
}

void save_corpus(const DocumentStore& store, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    for (const Document& doc : store.documents()) {
        json obj;
        obj["_id"] = doc.id;
        obj["title"] = doc.title;
        obj["text"] = doc.text;
        out << obj.dump() << '\n';
    }
}

std::vector<Query> load_queries(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::vector<Query> queries;
    std::unordered_map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::exception& e) {
            fail_line(path, line_no, std::string("malformed JSON: ") + e.what());
        }
        if (!obj.is_object()) fail_line(path, line_no, "expected a JSON object");
        Query q;
        q.id = require_string_field(obj, "_id", path, line_no);
        if (q.id.empty()) fail_line(path, line_no, "field `_id` must be non-empty");
        q.text = require_string_field(obj, "text", path, line_no);
        if (q.text.empty()) fail_line(path, line_no, "field `text` must be non-empty");
        if (!seen.emplace(q.id, line_no).second)
            fail_line(path, line_no, "duplicate query id: " + q.id);
        queries.push_back(std::move(q));
    }
    return queries;
}

Qrels load_qrels(const std::string& path) {
    std::ifstream in = open_for_read(path);
    Qrels qrels;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line_no == 1 && line.rfind("query-id", 0) == 0) continue;  // header
        std::istringstream row(line);
        std::string qid, did, score_str;
        if (!(row >> qid >> did >> score_str))
            fail_line(path, line_no, "expected `query-id corpus-id score`");
        std::string extra;
        if (row >> extra) fail_line(path, line_no, "trailing data after score column");
        int grade = 0;
        std::size_t consumed = 0;
        try {
            grade = std::stoi(score_str, &consumed);
        } catch (const std::exception&) {
            consumed = 0;
        }
        if (consumed != score_str.size())
            fail_line(path, line_no, "score must be an integer, got `" + score_str + "`");
        if (grade < 0) fail_line(path, line_no, "score must be non-negative");
        auto q_it = qrels.judgments().find(qid);
        if (q_it != qrels.judgments().end() && q_it->second.count(did)) {
            qrels.warnings().push_back("duplicate judgment for (" + qid + ", " + did +
                                       ") at line " + std::to_string(line_no) +
                                       "; keeping the later grade");
        }
        qrels.set(qid, did, grade);
    }
    return qrels;
}

void write_run(const std::map<std::string, ScoredList>& results, const std::string& tag,
               const std::string& path) {
    for (const auto& [qid, list] : results) {
        if (!is_sorted_by_score_desc(list))
            throw std::logic_error("write_run: list for query " + qid +
                                   " is not sorted by descending score");
    }
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot open file for writing: " + path);
    char score_buf[64];
    for (const auto& [qid, list] : results) {
        int rank = 1;
        for (const ScoredEntry& entry : list) {
            std::snprintf(score_buf, sizeof(score_buf), "%.6f", entry.score);
            out << qid << " Q0 " << entry.doc_id << ' ' << rank << ' ' << score_buf << ' '
                << tag << '\n';
            ++rank;
        }
    }
}

std::map<std::string, std::vector<RunEntry>> parse_run(const std::string& path) {
    std::ifstream in = open_for_read(path);
    std::map<std::string, std::vector<RunEntry>> runs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string qid, q0, did, rank_str, score_str, tag;
        if (!(row >> qid >> q0 >> did >> rank_str >> score_str >> tag))
            fail_line(path, line_no, "expected 6 columns `qid Q0 docid rank score tag`");
        RunEntry entry;
        entry.doc_id = did;
        try {
            std::size_t consumed = 0;
            entry.rank = std::stoi(rank_str, &consumed);
            if (consumed != rank_str.size() || entry.rank < 1) throw std::invalid_argument(rank_str);
        } catch (const std::exception&) {
            fail_line(path, line_no, "rank must be a positive integer, got `" + rank_str + "`");
        }
        try {
            std::size_t consumed = 0;
            entry.score = std::stod(score_str, &consumed);
            if (consumed != score_str.size()) throw std::invalid_argument(score_str);
        } catch (const std::exception&) {
            fail_line(path, line_no, "score must be a number, got `" + score_str + "`");
        }
        runs[qid].push_back(std::move(entry));
    }
    for (auto& [qid, entries] : runs) {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    }
    return runs;
}

std::string doc_prompt_text(const Document& doc) {
    if (doc.title.empty()) return doc.text;
    if (doc.text.empty()) return doc.title;
    return doc.title + " " + doc.text;
}

}  // namespace requery
