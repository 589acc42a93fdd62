#include "requery/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <stdexcept>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "requery/text_util.hpp"

namespace requery {

namespace {

bool kept_order(const KeptEntry& a, const KeptEntry& b) {
    if (a.grade != b.grade) return a.grade > b.grade;
    if (a.retriever_score != b.retriever_score) return a.retriever_score > b.retriever_score;
    return a.doc_id < b.doc_id;
}

nlohmann::json scored_json(const ScoredList& list) {
    nlohmann::json out = nlohmann::json::array();
    for (const ScoredEntry& entry : list) {
        out.push_back({{"doc", entry.doc_id}, {"score", entry.score}});
    }
    return out;
}

}  // namespace

void PipelineConfig::validate() const {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    if (max_rewrites < 1) throw std::invalid_argument("max_rewrites must be >= 1");
    if (feedback_size < 0) throw std::invalid_argument("feedback_size must be >= 0");
    if (tau < 1 || tau > 5) throw std::invalid_argument("tau must be in [1,5]");
    RerankConfig rerank{window, step, strong_top, cheap_model, strong_model};
    rerank.validate();
}

Pipeline::Pipeline(PipelineComponents components, PipelineConfig config)
    : components_(components), config_(std::move(config)) {
    config_.validate();
}

std::pair<RankedOutput, RunTrace> Pipeline::run_query(const Query& query) {
    RunTrace trace;
    trace.query_id = query.id;
    trace.query_text = query.text;
    const auto usage_before = components_.gateway.report().usage;

    std::vector<KeptEntry> accumulated;
    std::unordered_set<std::string> accumulated_ids;
    std::unordered_map<std::string, ScoredList> retrieved_by_query;
    RewriteHistory history(query.text, static_cast<std::size_t>(config_.max_rewrites),
                           config_.feedback_char_budget);

    auto doc_text = [this](const std::string& doc_id) {
        const Document* doc = components_.store.lookup(doc_id);
        if (doc == nullptr) throw std::logic_error("doc " + doc_id + " vanished from the store");
        return doc_prompt_text(*doc);
    };

    std::string current_query = query.text;
    for (int t = 1; t <= config_.max_rewrites; ++t) {
        IterationTrace iter;
        iter.t = t;
        iter.query_used = current_query;

        const std::string& target_query =
            config_.relevance_target == RelevanceTarget::Original ? query.text : current_query;

        ScoredList retrieved;
        FilteredList filtered;
        const auto prev = retrieved_by_query.find(current_query);
        if (prev != retrieved_by_query.end()) {
            // A rewrite that repeats an earlier query would retrieve the
            // same list and merge nothing new; keep the feedback, skip the
            // round trip.
            iter.duplicate_skipped = true;
            ++trace.duplicate_rewrites;
            retrieved = prev->second;
        } else {
            retrieved = components_.index.search(current_query, config_.n);
            retrieved_by_query.emplace(current_query, retrieved);
            iter.retrieved = retrieved;

            filtered = components_.relevance.filter(target_query, retrieved, components_.store,
                                                    config_.tau);
            iter.kept = filtered.kept;
            iter.dropped = filtered.dropped;

            for (const KeptEntry& entry : filtered.kept) {
                if (!accumulated_ids.insert(entry.doc_id).second) {
                    ++iter.merge_duplicates;
                    continue;
                }
                accumulated.push_back(entry);
            }
            std::sort(accumulated.begin(), accumulated.end(), kept_order);
        }
        iter.merged_size = accumulated.size();

        if (accumulated.size() >= static_cast<std::size_t>(config_.n) || t == config_.max_rewrites) {
            trace.iterations.push_back(std::move(iter));
            break;
        }

        std::vector<std::string> feedback_texts;
        if (config_.feedback_enabled && config_.feedback_size > 0) {
            if (config_.feedback_source == FeedbackSource::Retriever) {
                const std::size_t count =
                    std::min<std::size_t>(static_cast<std::size_t>(config_.feedback_size),
                                          retrieved.size());
                for (std::size_t i = 0; i < count; ++i) {
                    iter.feedback_doc_ids.push_back(retrieved[i].doc_id);
                }
            } else {
                if (iter.duplicate_skipped) {
                    // Memoized grades make this re-filter free of LLM calls.
                    filtered = components_.relevance.filter(target_query, retrieved,
                                                            components_.store, config_.tau);
                }
                std::vector<KeptEntry> by_grade = filtered.kept;
                std::sort(by_grade.begin(), by_grade.end(), kept_order);
                const std::size_t count = std::min<std::size_t>(
                    static_cast<std::size_t>(config_.feedback_size), by_grade.size());
                for (std::size_t i = 0; i < count; ++i) {
                    iter.feedback_doc_ids.push_back(by_grade[i].doc_id);
                }
            }
            for (const std::string& doc_id : iter.feedback_doc_ids) {
                feedback_texts.push_back(doc_text(doc_id));
            }
        }

        history.append_round(current_query, feedback_texts);
        iter.rewrite_prompt_fnv1a64 = fnv1a64_hex(history.render_user_message());

        std::string next_query;
        try {
            next_query = components_.rewriter.generate_rewrite(history);
        } catch (const TransportError&) {
            throw;
        } catch (const GatewayError& e) {
            trace.warnings.push_back("rewrite failed at iteration " + std::to_string(t) +
                                     ", stopping: " + e.what());
            trace.iterations.push_back(std::move(iter));
            break;
        }
        iter.generated_rewrite = next_query;
        trace.iterations.push_back(std::move(iter));
        current_query = std::move(next_query);
    }

    // Final ordering is always judged against the original query.
    std::vector<RankInput> rank_inputs;
    rank_inputs.reserve(accumulated.size());
    for (const KeptEntry& entry : accumulated) {
        rank_inputs.push_back({entry.doc_id, doc_text(entry.doc_id), entry.retriever_score});
    }
    ScoredList ordered =
        components_.relevance.rank_by_relevance(query.text, rank_inputs, trace.warnings);
    if (ordered.size() > static_cast<std::size_t>(config_.n)) {
        ordered.resize(static_cast<std::size_t>(config_.n));
    }
    for (const ScoredEntry& entry : ordered) trace.pre_rerank.push_back(entry.doc_id);

    if (config_.final_rerank && !ordered.empty()) {
        RerankConfig rerank{config_.window, config_.step, config_.strong_top, config_.cheap_model,
                            config_.strong_model};
        ordered = components_.reranker.two_phase_rerank(query.text, ordered, doc_text, rerank,
                                                        trace.warnings);
        for (const ScoredEntry& entry : ordered) trace.post_rerank.push_back(entry.doc_id);
    }

    const auto usage_after = components_.gateway.report().usage;
    for (const auto& [model, after] : usage_after) {
        ModelUsage delta = after;
        auto before_it = usage_before.find(model);
        if (before_it != usage_before.end()) {
            delta.calls -= before_it->second.calls;
            delta.cached_hits -= before_it->second.cached_hits;
            delta.input_tokens -= before_it->second.input_tokens;
            delta.output_tokens -= before_it->second.output_tokens;
        }
        if (delta.calls || delta.cached_hits || delta.input_tokens || delta.output_tokens) {
            trace.usage_delta[model] = delta;
        }
    }

    RankedOutput output;
    output.query_id = query.id;
    output.ranked = std::move(ordered);
    return {std::move(output), std::move(trace)};
}

BatchResult Pipeline::run_batch(const std::vector<Query>& queries, int parallelism) {
    if (parallelism < 1) throw std::invalid_argument("batch parallelism must be >= 1");

    struct Slot {
        bool ok = false;
        RankedOutput output;
        RunTrace trace;
        std::string error;
        bool transport = false;
    };
    std::vector<Slot> slots(queries.size());

    auto run_one = [&](std::size_t i) {
        Slot& slot = slots[i];
        slot.trace.query_id = queries[i].id;
        slot.trace.query_text = queries[i].text;
        try {
            auto [output, trace] = run_query(queries[i]);
            slot.output = std::move(output);
            slot.trace = std::move(trace);
            slot.ok = true;
        } catch (const TransportError& e) {
            slot.error = e.what();
            slot.transport = true;
        } catch (const std::exception& e) {
            slot.error = e.what();
        }
        if (!slot.ok) slot.trace.warnings.push_back("query failed: " + slot.error);
    };

    if (parallelism == 1 || queries.size() <= 1) {
        for (std::size_t i = 0; i < queries.size(); ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= queries.size()) return;
                run_one(i);
            }
        };
        std::vector<std::thread> pool;
        const std::size_t n_threads =
            std::min<std::size_t>(static_cast<std::size_t>(parallelism), queries.size());
        pool.reserve(n_threads);
        for (std::size_t i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }

    BatchResult result;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        Slot& slot = slots[i];
        if (slot.ok) {
            result.run.emplace(slot.output.query_id, std::move(slot.output.ranked));
        } else {
            result.failures.push_back({queries[i].id, slot.error, slot.transport});
        }
        result.traces.push_back(std::move(slot.trace));
    }
    return result;
}

std::string RunTrace::to_json_line() const {
    nlohmann::json root;
    root["query_id"] = query_id;
    root["query_text"] = query_text;
    root["duplicate_rewrites"] = duplicate_rewrites;
    root["pre_rerank"] = pre_rerank;
    root["post_rerank"] = post_rerank;
    root["warnings"] = warnings;

    nlohmann::json iters = nlohmann::json::array();
    for (const IterationTrace& iter : iterations) {
        nlohmann::json entry;
        entry["t"] = iter.t;
        entry["query"] = iter.query_used;
        entry["duplicate_skipped"] = iter.duplicate_skipped;
        entry["retrieved"] = scored_json(iter.retrieved);

        nlohmann::json kept = nlohmann::json::array();
        for (const KeptEntry& k : iter.kept) {
            kept.push_back(
                {{"doc", k.doc_id}, {"grade", k.grade}, {"retriever_score", k.retriever_score}});
        }
        entry["kept"] = std::move(kept);

        nlohmann::json dropped = nlohmann::json::array();
        for (const DroppedEntry& d : iter.dropped) {
            nlohmann::json row;
            row["doc"] = d.doc_id;
            if (d.grade) row["grade"] = *d.grade;
            if (!d.error.empty()) row["error"] = d.error;
            dropped.push_back(std::move(row));
        }
        entry["dropped"] = std::move(dropped);

        entry["merge_duplicates"] = iter.merge_duplicates;
        entry["merged_size"] = iter.merged_size;
        entry["feedback"] = iter.feedback_doc_ids;
        if (!iter.rewrite_prompt_fnv1a64.empty()) {
            entry["rewrite_prompt_fnv1a64"] = iter.rewrite_prompt_fnv1a64;
        }
        if (!iter.generated_rewrite.empty()) entry["rewrite"] = iter.generated_rewrite;
        iters.push_back(std::move(entry));
    }
    root["iterations"] = std::move(iters);

    nlohmann::json usage = nlohmann::json::object();
    for (const auto& [model, u] : usage_delta) {
        usage[model] = {{"calls", u.calls},
                        {"cached_hits", u.cached_hits},
                        {"input_tokens", u.input_tokens},
                        {"output_tokens", u.output_tokens}};
    }
    root["usage"] = std::move(usage);
    return root.dump();
}

}  // namespace requery
