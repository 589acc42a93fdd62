#include "requery/inverted_index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <stdexcept>
#include <unordered_map>

namespace requery {

namespace {

constexpr char kMagic[4] = {'S', 'I', 'D', 'X'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

void write_u32(std::ostream& out, std::uint32_t v) {
    char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(buf, 8);
}

void write_f64(std::ostream& out, double v) {
    std::uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    write_u64(out, bits);
}

void write_string(std::ostream& out, const std::string& s) {
    write_u32(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

[[noreturn]] void corrupt(const std::string& path, const std::string& what) {
    throw ParseError(path + ": " + what);
}

std::uint8_t read_u8(std::istream& in, const std::string& path) {
    int c = in.get();
    if (c == std::char_traits<char>::eof()) corrupt(path, "unexpected end of file");
    return static_cast<std::uint8_t>(c);
}

std::uint32_t read_u32(std::istream& in, const std::string& path) {
    char buf[4];
    if (!in.read(buf, 4)) corrupt(path, "unexpected end of file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& in, const std::string& path) {
    char buf[8];
    if (!in.read(buf, 8)) corrupt(path, "unexpected end of file");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
    return v;
}

double read_f64(std::istream& in, const std::string& path) {
    std::uint64_t bits = read_u64(in, path);
    double v = 0.0;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

std::string read_string(std::istream& in, const std::string& path) {
    std::uint32_t len = read_u32(in, path);
    std::string s(len, '\0');
    if (len > 0 && !in.read(s.data(), len)) corrupt(path, "unexpected end of file");
    return s;
}

}  // namespace

InvertedIndex InvertedIndex::build(const DocumentStore& store, const IndexParams& params) {
    params.validate();
    if (store.size() == 0) {
        throw std::invalid_argument("cannot build an index over an empty corpus");
    }

    InvertedIndex index;
    index.params_ = params;
    index.doc_ids_.reserve(store.size());
    index.doc_lengths_.reserve(store.size());

    std::uint64_t total_length = 0;
    for (const Document& doc : store.documents()) {
        const auto ordinal = static_cast<std::uint32_t>(index.doc_ids_.size());
        index.doc_ids_.push_back(doc.id);

        std::vector<std::string> tokens = tokenize(doc_prompt_text(doc), params);
        index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total_length += tokens.size();

        std::unordered_map<std::string, std::uint32_t> tf;
        for (const std::string& tok : tokens) ++tf[tok];
        for (const auto& [term, count] : tf) {
            index.postings_[term].push_back({ordinal, count});
        }
    }

    // Builds walk documents in ordinal order per term already, but the
    // unordered tf map does not disturb that: each doc touches a term's
    // posting list at most once. Sort anyway to make the invariant explicit.
    for (auto& [term, list] : index.postings_) {
        std::sort(list.begin(), list.end(),
                  [](const Posting& a, const Posting& b) { return a.doc < b.doc; });
    }

    index.avgdl_ = static_cast<double>(total_length) / static_cast<double>(store.size());
    return index;
}

ScoredList InvertedIndex::search(const std::string& query_text, int k) const {
    if (k < 1) throw std::invalid_argument("search k must be >= 1");

    // Duplicate query terms contribute once. The set also fixes the term
    // iteration order, which pins floating-point accumulation order.
    std::set<std::string> terms;
    for (std::string& tok : tokenize(query_text, params_)) terms.insert(std::move(tok));

    const double n_docs = static_cast<double>(doc_ids_.size());
    std::unordered_map<std::uint32_t, double> scores;
    for (const std::string& term : terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const auto& list = it->second;
        const double df = static_cast<double>(list.size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        for (const Posting& posting : list) {
            const double tf = static_cast<double>(posting.tf);
            const double norm =
                params_.k1 * (1.0 - params_.b +
                              params_.b * static_cast<double>(doc_lengths_[posting.doc]) / avgdl_);
            scores[posting.doc] += idf * tf / (tf + norm);
        }
    }

    ScoredList results;
    results.reserve(scores.size());
    for (const auto& [ordinal, score] : scores) {
        results.push_back({doc_ids_[ordinal], score});
    }
    std::sort(results.begin(), results.end(), [](const ScoredEntry& a, const ScoredEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
    if (results.size() > static_cast<std::size_t>(k)) results.resize(static_cast<std::size_t>(k));
    return results;
}

std::uint32_t InvertedIndex::doc_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : static_cast<std::uint32_t>(it->second.size());
}

const std::vector<Posting>* InvertedIndex::postings_for(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

void InvertedIndex::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError(path + ": cannot open for writing");

    out.write(kMagic, 4);
    write_u32(out, kFormatVersion);
    write_f64(out, params_.k1);
    write_f64(out, params_.b);
    write_u8(out, params_.stemming ? 1 : 0);
    write_u8(out, params_.stopwords ? 1 : 0);

    write_u64(out, doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        write_string(out, doc_ids_[i]);
        write_u32(out, doc_lengths_[i]);
    }

    // std::map already iterates terms in lexicographic order, so the byte
    // stream is a deterministic function of the index contents.
    write_u64(out, postings_.size());
    for (const auto& [term, list] : postings_) {
        write_string(out, term);
        write_u32(out, static_cast<std::uint32_t>(list.size()));
        for (const Posting& posting : list) {
            write_u32(out, posting.doc);
            write_u32(out, posting.tf);
        }
    }

    if (!out) throw ParseError(path + ": write failed");
}

InvertedIndex InvertedIndex::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path + ": cannot open for reading");

    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        corrupt(path, "not an index file (bad magic)");
    }
    const std::uint32_t version = read_u32(in, path);
    if (version != kFormatVersion) {
        corrupt(path, "unsupported index format version " + std::to_string(version));
    }

    InvertedIndex index;
    index.params_.k1 = read_f64(in, path);
    index.params_.b = read_f64(in, path);
    index.params_.stemming = read_u8(in, path) != 0;
    index.params_.stopwords = read_u8(in, path) != 0;
    index.params_.validate();

    const std::uint64_t n_docs = read_u64(in, path);
    if (n_docs == 0) corrupt(path, "index contains no documents");
    index.doc_ids_.reserve(n_docs);
    index.doc_lengths_.reserve(n_docs);
    std::uint64_t total_length = 0;
    for (std::uint64_t i = 0; i < n_docs; ++i) {
        index.doc_ids_.push_back(read_string(in, path));
        index.doc_lengths_.push_back(read_u32(in, path));
        total_length += index.doc_lengths_.back();
    }
    index.avgdl_ = static_cast<double>(total_length) / static_cast<double>(n_docs);

    const std::uint64_t n_terms = read_u64(in, path);
    for (std::uint64_t i = 0; i < n_terms; ++i) {
        std::string term = read_string(in, path);
        const std::uint32_t n_postings = read_u32(in, path);
        std::vector<Posting> list;
        list.reserve(n_postings);
        for (std::uint32_t p = 0; p < n_postings; ++p) {
            Posting posting;
            posting.doc = read_u32(in, path);
            posting.tf = read_u32(in, path);
            if (posting.doc >= n_docs) corrupt(path, "posting references missing document");
            if (posting.tf == 0) corrupt(path, "posting with zero term frequency");
            list.push_back(posting);
        }
        index.postings_.emplace(std::move(term), std::move(list));
    }

    return index;
}

}  // namespace requery
