#pragma once

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "requery/scored_list.hpp"

namespace requery {

/// Raised on malformed input files; message carries the file and line.
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct Document {
    std::string id;
    std::string title;  // empty when the corpus has none
    std::string text;
};

struct Query {
    std::string id;
    std::string text;
};

/// Immutable after load; safe for concurrent readers.
class DocumentStore {
  public:
    void add(Document doc);

    const Document* lookup(const std::string& id) const;
    const Document& at(const std::string& id) const;

    std::size_t size() const { return docs_.size(); }
    bool empty() const { return docs_.empty(); }

    /// Documents in insertion order; position doubles as the index ordinal.
    const std::vector<Document>& documents() const { return docs_; }

  private:
    std::vector<Document> docs_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

/// Graded relevance judgments. A missing (query, doc) pair means grade 0.
class Qrels {
  public:
    void set(const std::string& query_id, const std::string& doc_id, int grade);

    int grade(const std::string& query_id, const std::string& doc_id) const;
    std::size_t relevant_count(const std::string& query_id) const;
    bool has_query(const std::string& query_id) const;

    const std::map<std::string, std::map<std::string, int>>& judgments() const { return judgments_; }
    std::size_t size() const;

    std::vector<std::string>& warnings() { return warnings_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

  private:
    std::map<std::string, std::map<std::string, int>> judgments_;
    std::vector<std::string> warnings_;
};

/// Reads a BEIR corpus.jsonl: one object per line with `_id`, optional
/// `title`, and `text`.
DocumentStore load_corpus(const std::string& path);

/// Writes a store back out in the same JSONL layout.
void save_corpus(const DocumentStore& store, const std::string& path);

/// Reads a BEIR queries.jsonl (`_id`, `text`), preserving file order.
std::vector<Query> load_queries(const std::string& path);

/// Reads a BEIR qrels TSV with header `query-id	corpus-id	score`.
/// Duplicate (query, doc) rows overwrite earlier ones with a warning.
Qrels load_qrels(const std::string& path);

/// Writes a TREC 6-column run file: `qid Q0 docid rank score tag`,
/// ranks from 1, scores with 6 decimal places. Lists must already be
/// sorted by descending score.
void write_run(const std::map<std::string, ScoredList>& results, const std::string& tag,
               const std::string& path);

struct RunEntry {
    std::string doc_id;
    int rank = 0;
    double score = 0.0;
};

/// Parses a TREC run file; entries per query ordered by ascending rank.
std::map<std::string, std::vector<RunEntry>> parse_run(const std::string& path);

/// Title and body joined the way documents are shown to models.
std::string doc_prompt_text(const Document& doc);

}  // namespace requery
