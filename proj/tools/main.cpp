#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "requery/corpus.hpp"
#include "requery/evaluation.hpp"
#include "requery/inverted_index.hpp"
#include "requery/llm_gateway.hpp"
#include "requery/mock_backend.hpp"
#include "requery/pipeline.hpp"
#include "requery/relevance.hpp"
#include "requery/reranker.hpp"
#include "requery/rewriter.hpp"
#include "requery/run_config.hpp"

namespace {

using namespace requery;

int cmd_index(const std::string& corpus_path, const std::string& out_path, IndexParams params,
              bool force) {
    if (std::filesystem::exists(out_path) && !force) {
        std::fprintf(stderr, "error: %s already exists (use --force to overwrite)\n",
                     out_path.c_str());
        return 1;
    }
    const DocumentStore store = load_corpus(corpus_path);
    const InvertedIndex index = InvertedIndex::build(store, params);
    index.save(out_path);
    std::printf("indexed %zu documents, %zu terms, avgdl %.2f -> %s\n", index.doc_count(),
                index.term_count(), index.avg_doc_length(), out_path.c_str());
    return 0;
}

std::unique_ptr<ChatBackend> make_backend(const RunConfig& config) {
    if (config.backend == "mock") {
        return std::make_unique<MockBackend>(MockRules::from_json_file(config.mock_rules_path));
    }
    const char* base_url = std::getenv("REQUERY_LLM_BASE_URL");
    if (base_url == nullptr || *base_url == '\0') {
        throw std::invalid_argument("backend = http needs REQUERY_LLM_BASE_URL in the environment");
    }
    const char* api_key = std::getenv("REQUERY_LLM_API_KEY");
    return std::make_unique<HttpBackend>(base_url, api_key == nullptr ? "" : api_key);
}

int cmd_run(RunConfig config) {
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    const std::filesystem::path out_dir(config.out_dir);

    const DocumentStore store = load_corpus(config.corpus_path);
    const std::vector<Query> queries = load_queries(config.queries_path);

    InvertedIndex index = config.index_path.empty()
                              ? InvertedIndex::build(store, config.index_params)
                              : InvertedIndex::load(config.index_path);

    RetryPolicy retry;
    retry.max_retries = config.retry_max;
    retry.base_delay = std::chrono::milliseconds(config.retry_base_ms);
    std::string cache = config.cache_file;
    if (cache.empty()) cache = (out_dir / "llm_cache.jsonl").string();
    if (cache == "none") cache.clear();
    LlmGateway gateway(make_backend(config), cache, retry);
    for (const std::string& warning : gateway.warnings()) {
        std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }

    RelevanceScorer relevance(gateway, config.pipeline.cheap_model, config.relevance_parallelism);
    Rewriter rewriter(gateway, config.pipeline.strong_model);
    Reranker reranker(gateway);
    Pipeline pipeline({index, store, gateway, relevance, rewriter, reranker}, config.pipeline);

    const BatchResult result = pipeline.run_batch(queries, config.batch_parallelism);

    for (const RunTrace& trace : result.traces) {
        bool failed = false;
        for (const BatchFailure& failure : result.failures) {
            if (failure.query_id == trace.query_id) failed = true;
        }
        if (failed) {
            std::printf("query %s: FAILED\n", trace.query_id.c_str());
        } else {
            std::printf("query %s: %zu docs, %zu iterations\n", trace.query_id.c_str(),
                        trace.post_rerank.empty() ? trace.pre_rerank.size()
                                                  : trace.post_rerank.size(),
                        trace.iterations.size());
        }
    }

    write_run(result.run, config.run_tag, (out_dir / "run.trec").string());

    std::ofstream traces_out(out_dir / "traces.jsonl", std::ios::trunc);
    if (!traces_out) throw ParseError((out_dir / "traces.jsonl").string() + ": cannot write");
    for (const RunTrace& trace : result.traces) traces_out << trace.to_json_line() << '\n';

    const CostReport report = gateway.report();
    std::ofstream ledger_out(out_dir / "ledger.json", std::ios::trunc);
    if (!ledger_out) throw ParseError((out_dir / "ledger.json").string() + ": cannot write");
    ledger_out << report.to_json() << '\n';

    nlohmann::json errors = nlohmann::json::array();
    for (const BatchFailure& failure : result.failures) {
        errors.push_back({{"query_id", failure.query_id},
                          {"error", failure.error},
                          {"transport", failure.transport}});
    }
    std::ofstream errors_out(out_dir / "errors.json", std::ios::trunc);
    if (!errors_out) throw ParseError((out_dir / "errors.json").string() + ": cannot write");
    errors_out << errors.dump(2) << '\n';

    const GatewayStats stats = gateway.stats();
    std::printf("%zu/%zu queries ok; backend calls %lld, cache hits %lld, retries %lld\n",
                result.run.size(), queries.size(), stats.backend_calls, stats.cache_hits,
                stats.retries);
    std::printf("estimated cost: $%.4f (details in %s)\n", report.total_usd,
                (out_dir / "ledger.json").string().c_str());

    if (result.run.empty() && !queries.empty()) {
        bool transport = false;
        for (const BatchFailure& failure : result.failures) transport |= failure.transport;
        return transport ? 2 : 1;
    }
    return 0;
}

int cmd_eval(const std::string& run_path, const std::string& qrels_path,
             std::vector<int> ndcg_ks, std::vector<int> recall_ks, bool capped, bool as_json) {
    if (ndcg_ks.empty() && recall_ks.empty()) {
        ndcg_ks = {10};
        recall_ks = {100};
    }
    std::vector<MetricSpec> specs;
    for (int k : ndcg_ks) specs.push_back({MetricSpec::Kind::Ndcg, k});
    for (int k : recall_ks) {
        specs.push_back({capped ? MetricSpec::Kind::RecallCapped : MetricSpec::Kind::Recall, k});
    }

    std::map<std::string, ScoredList> run;
    for (const auto& [query_id, entries] : parse_run(run_path)) {
        ScoredList list;
        for (const RunEntry& entry : entries) list.push_back({entry.doc_id, entry.score});
        run.emplace(query_id, std::move(list));
    }

    const Qrels qrels = load_qrels(qrels_path);
    for (const std::string& warning : qrels.warnings()) {
        std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }

    const EvalReport report = evaluate_run(run, qrels, specs);
    for (const std::string& warning : report.warnings) {
        std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }
    if (as_json) {
        std::printf("%s\n", report.to_json().c_str());
    } else {
        std::printf("%s", report.to_table().c_str());
    }
    return 0;
}

int cmd_trace(const std::string& traces_path, const std::string& only_query) {
    std::ifstream in(traces_path);
    if (!in) {
        std::fprintf(stderr, "error: cannot open %s\n", traces_path.c_str());
        return 1;
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json trace = nlohmann::json::parse(line, nullptr, false);
        if (trace.is_discarded()) {
            std::fprintf(stderr, "error: %s:%zu: not valid JSON\n", traces_path.c_str(), line_no);
            return 1;
        }
        const std::string query_id = trace.value("query_id", "");
        if (!only_query.empty() && query_id != only_query) continue;

        std::printf("query %s: %s\n", query_id.c_str(), trace.value("query_text", "").c_str());
        for (const auto& iter : trace.value("iterations", nlohmann::json::array())) {
            std::printf("  #%d %s%s\n", iter.value("t", 0), iter.value("query", "").c_str(),
                        iter.value("duplicate_skipped", false) ? " (duplicate, reused)" : "");
            std::printf("     retrieved %zu, kept %zu, dropped %zu, merged %zu\n",
                        iter.value("retrieved", nlohmann::json::array()).size(),
                        iter.value("kept", nlohmann::json::array()).size(),
                        iter.value("dropped", nlohmann::json::array()).size(),
                        static_cast<std::size_t>(iter.value("merged_size", 0)));
            if (iter.contains("rewrite")) {
                std::printf("     rewrite -> %s\n", iter["rewrite"].get<std::string>().c_str());
            }
        }
        std::printf("  pre-rerank %zu docs, post-rerank %zu docs\n",
                    trace.value("pre_rerank", nlohmann::json::array()).size(),
                    trace.value("post_rerank", nlohmann::json::array()).size());
        for (const auto& warning : trace.value("warnings", nlohmann::json::array())) {
            std::printf("  warning: %s\n", warning.get<std::string>().c_str());
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Iterative rewrite/retrieve/rerank engine"};
    app.require_subcommand(1);

    // index
    auto* index_cmd = app.add_subcommand("index", "Build a BM25 index from a JSONL corpus");
    std::string corpus_path;
    std::string index_out;
    IndexParams index_params;
    bool no_stemming = false;
    bool no_stopwords = false;
    bool force = false;
    index_cmd->add_option("--corpus", corpus_path, "Corpus JSONL file")->required();
    index_cmd->add_option("--out", index_out, "Index file to write")->required();
    index_cmd->add_option("--k1", index_params.k1, "BM25 k1")->capture_default_str();
    index_cmd->add_option("--b", index_params.b, "BM25 b")->capture_default_str();
    index_cmd->add_flag("--no-stemming", no_stemming, "Skip Porter stemming");
    index_cmd->add_flag("--no-stopwords", no_stopwords, "Skip stopword removal");
    index_cmd->add_flag("--force", force, "Overwrite an existing index file");

    // run
    auto* run_cmd = app.add_subcommand("run", "Run the retrieval pipeline from a config file");
    std::string config_path;
    bool no_feedback = false;
    bool no_rerank = false;
    std::string feedback_source;
    std::string relevance_target;
    int max_rewrites = 0;
    std::string out_override;
    run_cmd->add_option("config", config_path, "Run config file")->required();
    run_cmd->add_flag("--no-feedback", no_feedback, "Drop retrieval feedback from rewrite prompts");
    run_cmd->add_flag("--no-rerank", no_rerank, "Emit the relevance ordering without reranking");
    run_cmd->add_option("--feedback-source", feedback_source, "retriever or relevance");
    run_cmd->add_option("--relevance-target", relevance_target, "original or rewrite");
    run_cmd->add_option("--max-rewrites", max_rewrites, "Cap on queries tried per input");
    run_cmd->add_option("--out", out_override, "Output directory (overrides config)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Score a TREC run file against qrels");
    std::string run_path;
    std::string qrels_path;
    std::vector<int> ndcg_ks;
    std::vector<int> recall_ks;
    bool capped = false;
    bool as_json = false;
    eval_cmd->add_option("--run", run_path, "TREC run file")->required();
    eval_cmd->add_option("--qrels", qrels_path, "Qrels TSV file")->required();
    eval_cmd->add_option("--ndcg", ndcg_ks, "nDCG cutoffs (repeatable)");
    eval_cmd->add_option("--recall", recall_ks, "Recall cutoffs (repeatable)");
    eval_cmd->add_flag("--capped", capped, "Cap recall denominators at k");
    eval_cmd->add_flag("--json", as_json, "Emit the JSON report instead of the table");

    // trace
    auto* trace_cmd = app.add_subcommand("trace", "Pretty-print a traces.jsonl file");
    std::string traces_path;
    std::string only_query;
    trace_cmd->add_option("traces", traces_path, "traces.jsonl from a run")->required();
    trace_cmd->add_option("--query", only_query, "Show only this query id");

    CLI11_PARSE(app, argc, argv);

    try {
        if (index_cmd->parsed()) {
            index_params.stemming = !no_stemming;
            index_params.stopwords = !no_stopwords;
            return cmd_index(corpus_path, index_out, index_params, force);
        }
        if (run_cmd->parsed()) {
            RunConfig config = load_run_config(config_path);
            if (no_feedback) config.pipeline.feedback_enabled = false;
            if (no_rerank) config.pipeline.final_rerank = false;
            if (!feedback_source.empty()) {
                if (feedback_source == "retriever") {
                    config.pipeline.feedback_source = FeedbackSource::Retriever;
                } else if (feedback_source == "relevance") {
                    config.pipeline.feedback_source = FeedbackSource::Relevance;
                } else {
                    throw std::invalid_argument("--feedback-source must be retriever or relevance");
                }
            }
            if (!relevance_target.empty()) {
                if (relevance_target == "original") {
                    config.pipeline.relevance_target = RelevanceTarget::Original;
                } else if (relevance_target == "rewrite") {
                    config.pipeline.relevance_target = RelevanceTarget::Rewrite;
                } else {
                    throw std::invalid_argument("--relevance-target must be original or rewrite");
                }
            }
            if (max_rewrites > 0) config.pipeline.max_rewrites = max_rewrites;
            if (!out_override.empty()) config.out_dir = out_override;
            return cmd_run(std::move(config));
        }
        if (eval_cmd->parsed()) {
            return cmd_eval(run_path, qrels_path, ndcg_ks, recall_ks, capped, as_json);
        }
        if (trace_cmd->parsed()) {
            return cmd_trace(traces_path, only_query);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
