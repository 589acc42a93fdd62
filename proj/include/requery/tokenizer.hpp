#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace requery {

/// Analyzer and BM25 constants. k1/b follow Pyserini's defaults.
struct IndexParams {
    double k1 = 0.9;
    double b = 0.4;
    bool stemming = true;
    bool stopwords = true;

    void validate() const;
};

/// Lowercases, splits on any non-alphanumeric byte, optionally drops the
/// classic 33-word English stopword list, optionally Porter-stems.
/// Token order is preserved.
std::vector<std::string> tokenize(std::string_view text, const IndexParams& params);

/// Classic Porter (1980) suffix-stripping stemmer over a lowercase word.
std::string porter_stem(std::string word);

bool is_stopword(std::string_view token);

}  // namespace requery
