#include "requery/run_config.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "requery/corpus.hpp"
#include "requery/text_util.hpp"

namespace requery {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line_no, const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
}

int parse_int(const std::string& path, std::size_t line_no, const std::string& key,
              const std::string& value) {
    try {
        std::size_t used = 0;
        const int parsed = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        fail(path, line_no, key + " needs an integer, got \"" + value + "\"");
    }
}

double parse_double(const std::string& path, std::size_t line_no, const std::string& key,
                    const std::string& value) {
    try {
        std::size_t used = 0;
        const double parsed = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return parsed;
    } catch (const std::exception&) {
        fail(path, line_no, key + " needs a number, got \"" + value + "\"");
    }
}

bool parse_bool(const std::string& path, std::size_t line_no, const std::string& key,
                const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    fail(path, line_no, key + " needs true or false, got \"" + value + "\"");
}

}  // namespace

void RunConfig::validate() const {
    auto require = [](const std::string& value, const char* key) {
        if (value.empty()) {
            throw std::invalid_argument(std::string("run config is missing \"") + key + "\"");
        }
    };
    require(corpus_path, "corpus");
    require(queries_path, "queries");
    require(out_dir, "out_dir");
    require(backend, "backend");

    if (backend != "mock" && backend != "http") {
        throw std::invalid_argument("backend must be \"mock\" or \"http\", got \"" + backend + "\"");
    }
    if (backend == "mock" && mock_rules_path.empty()) {
        throw std::invalid_argument("backend = mock needs mock_rules");
    }
    if (relevance_parallelism < 1) throw std::invalid_argument("relevance_parallelism must be >= 1");
    if (batch_parallelism < 1) throw std::invalid_argument("batch_parallelism must be >= 1");
    if (retry_max < 0) throw std::invalid_argument("retry_max must be >= 0");
    if (retry_base_ms < 0) throw std::invalid_argument("retry_base_ms must be >= 0");

    pipeline.validate();
    index_params.validate();
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path + ": cannot open config file");

    const std::filesystem::path base = std::filesystem::path(path).parent_path();
    auto resolve = [&base](const std::string& value) {
        if (value.empty() || value == "none") return value;
        std::filesystem::path p(value);
        return p.is_absolute() ? value : (base / p).string();
    };

    RunConfig config;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const std::string stripped = trim(line);
        if (stripped.empty()) continue;

        const auto eq = stripped.find('=');
        if (eq == std::string::npos) fail(path, line_no, "expected key = value");
        const std::string key = trim(stripped.substr(0, eq));
        const std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) fail(path, line_no, "empty key");
        if (value.empty()) fail(path, line_no, "empty value for \"" + key + "\"");

        if (key == "corpus") {
            config.corpus_path = resolve(value);
        } else if (key == "queries") {
            config.queries_path = resolve(value);
        } else if (key == "index") {
            config.index_path = resolve(value);
        } else if (key == "out_dir") {
            config.out_dir = resolve(value);
        } else if (key == "run_tag") {
            config.run_tag = value;
        } else if (key == "backend") {
            config.backend = value;
        } else if (key == "mock_rules") {
            config.mock_rules_path = resolve(value);
        } else if (key == "cache_file") {
            config.cache_file = resolve(value);
        } else if (key == "n") {
            config.pipeline.n = parse_int(path, line_no, key, value);
        } else if (key == "max_rewrites") {
            config.pipeline.max_rewrites = parse_int(path, line_no, key, value);
        } else if (key == "feedback_size") {
            config.pipeline.feedback_size = parse_int(path, line_no, key, value);
        } else if (key == "tau") {
            config.pipeline.tau = parse_int(path, line_no, key, value);
        } else if (key == "window") {
            config.pipeline.window = parse_int(path, line_no, key, value);
        } else if (key == "step") {
            config.pipeline.step = parse_int(path, line_no, key, value);
        } else if (key == "strong_top") {
            config.pipeline.strong_top = parse_int(path, line_no, key, value);
        } else if (key == "feedback_enabled") {
            config.pipeline.feedback_enabled = parse_bool(path, line_no, key, value);
        } else if (key == "feedback_source") {
            if (value == "retriever") {
                config.pipeline.feedback_source = FeedbackSource::Retriever;
            } else if (value == "relevance") {
                config.pipeline.feedback_source = FeedbackSource::Relevance;
            } else {
                fail(path, line_no, "feedback_source must be retriever or relevance");
            }
        } else if (key == "relevance_target") {
            if (value == "original") {
                config.pipeline.relevance_target = RelevanceTarget::Original;
            } else if (value == "rewrite") {
                config.pipeline.relevance_target = RelevanceTarget::Rewrite;
            } else {
                fail(path, line_no, "relevance_target must be original or rewrite");
            }
        } else if (key == "cheap_model") {
            config.pipeline.cheap_model = value;
        } else if (key == "strong_model") {
            config.pipeline.strong_model = value;
        } else if (key == "final_rerank") {
            config.pipeline.final_rerank = parse_bool(path, line_no, key, value);
        } else if (key == "feedback_char_budget") {
            const int budget = parse_int(path, line_no, key, value);
            if (budget < 1) fail(path, line_no, "feedback_char_budget must be >= 1");
            config.pipeline.feedback_char_budget = static_cast<std::size_t>(budget);
        } else if (key == "k1") {
            config.index_params.k1 = parse_double(path, line_no, key, value);
        } else if (key == "b") {
            config.index_params.b = parse_double(path, line_no, key, value);
        } else if (key == "stemming") {
            config.index_params.stemming = parse_bool(path, line_no, key, value);
        } else if (key == "stopwords") {
            config.index_params.stopwords = parse_bool(path, line_no, key, value);
        } else if (key == "relevance_parallelism") {
            config.relevance_parallelism = parse_int(path, line_no, key, value);
        } else if (key == "batch_parallelism") {
            config.batch_parallelism = parse_int(path, line_no, key, value);
        } else if (key == "retry_max") {
            config.retry_max = parse_int(path, line_no, key, value);
        } else if (key == "retry_base_ms") {
            config.retry_base_ms = parse_int(path, line_no, key, value);
        } else {
            fail(path, line_no, "unknown key \"" + key + "\"");
        }
    }

    return config;
}

}  // namespace requery
