#pragma once

#include <string>

#include "requery/pipeline.hpp"
#include "requery/tokenizer.hpp"

namespace requery {

/// Everything the `run` subcommand needs, parsed from a `key = value`
/// config file ('#' comments, blank lines allowed). Relative paths are
/// resolved against the config file's directory. Unknown keys are errors.
struct RunConfig {
    // Inputs and outputs.
    std::string corpus_path;   // required
    std::string queries_path;  // required
    std::string index_path;    // optional; built from the corpus when empty
    std::string out_dir;       // required
    std::string run_tag = "requery";

    // Backend. "mock" needs mock_rules; "http" reads REQUERY_LLM_BASE_URL
    // and REQUERY_LLM_API_KEY from the environment at startup.
    std::string backend;  // required: "mock" or "http"
    std::string mock_rules_path;
    std::string cache_file;  // default <out_dir>/llm_cache.jsonl; "none" disables

    PipelineConfig pipeline;
    IndexParams index_params;

    int relevance_parallelism = 1;
    int batch_parallelism = 1;
    int retry_max = 5;
    int retry_base_ms = 1000;

    /// Fails on missing required keys or inconsistent combinations.
    void validate() const;
};

RunConfig load_run_config(const std::string& path);

}  // namespace requery
