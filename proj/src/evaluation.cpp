#include "requery/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <stdexcept>

#include "json.hpp"

namespace requery {

namespace {

void check_k(int k) {
    if (k < 1) throw std::invalid_argument("metric cutoff k must be >= 1");
}

int grade_of(const std::map<std::string, int>& judgments, const std::string& doc_id) {
    auto it = judgments.find(doc_id);
    return it == judgments.end() ? 0 : it->second;
}

}  // namespace

double ndcg_at_k(const ScoredList& ranking, const std::map<std::string, int>& judgments, int k) {
    check_k(k);

    double dcg = 0.0;
    const std::size_t depth = std::min(static_cast<std::size_t>(k), ranking.size());
    for (std::size_t i = 0; i < depth; ++i) {
        const int rel = grade_of(judgments, ranking[i].doc_id);
        if (rel > 0) dcg += rel / std::log2(static_cast<double>(i) + 2.0);
    }

    std::vector<int> grades;
    for (const auto& [doc_id, grade] : judgments) {
        if (grade > 0) grades.push_back(grade);
    }
    std::sort(grades.begin(), grades.end(), std::greater<>());

    double idcg = 0.0;
    const std::size_t ideal_depth = std::min(static_cast<std::size_t>(k), grades.size());
    for (std::size_t i = 0; i < ideal_depth; ++i) {
        idcg += grades[i] / std::log2(static_cast<double>(i) + 2.0);
    }

    return idcg == 0.0 ? 0.0 : dcg / idcg;
}

double recall_at_k(const ScoredList& ranking, const std::map<std::string, int>& judgments, int k,
                   bool capped) {
    check_k(k);

    std::size_t total_relevant = 0;
    for (const auto& [doc_id, grade] : judgments) {
        if (grade > 0) ++total_relevant;
    }
    if (total_relevant == 0) return 0.0;

    std::size_t found = 0;
    const std::size_t depth = std::min(static_cast<std::size_t>(k), ranking.size());
    for (std::size_t i = 0; i < depth; ++i) {
        if (grade_of(judgments, ranking[i].doc_id) > 0) ++found;
    }

    const std::size_t denom =
        capped ? std::min(total_relevant, static_cast<std::size_t>(k)) : total_relevant;
    return static_cast<double>(found) / static_cast<double>(denom);
}

std::string MetricSpec::name() const {
    char buf[32];
    switch (kind) {
        case Kind::Ndcg:
            std::snprintf(buf, sizeof(buf), "ndcg@%d", k);
            break;
        case Kind::Recall:
            std::snprintf(buf, sizeof(buf), "recall@%d", k);
            break;
        case Kind::RecallCapped:
            std::snprintf(buf, sizeof(buf), "recall_capped@%d", k);
            break;
    }
    return buf;
}

EvalReport evaluate_run(const std::map<std::string, ScoredList>& run, const Qrels& qrels,
                        const std::vector<MetricSpec>& specs) {
    if (specs.empty()) throw std::invalid_argument("no metrics requested");
    for (const MetricSpec& spec : specs) check_k(spec.k);

    EvalReport report;
    report.specs = specs;
    if (qrels.judgments().empty()) {
        report.warnings.push_back("qrels hold no queries; nothing to evaluate");
    }

    for (const auto& [query_id, entries] : run) {
        if (!qrels.judgments().count(query_id)) {
            report.warnings.push_back("query " + query_id + " present in run but not in qrels; skipped");
        }
        if (!is_sorted_by_score_desc(entries)) {
            throw std::invalid_argument("run entries for query " + query_id +
                                        " are not sorted by descending score");
        }
    }

    static const ScoredList kEmpty;
    for (const auto& [query_id, judgments] : qrels.judgments()) {
        QueryEval qe;
        qe.query_id = query_id;
        qe.no_relevant = qrels.relevant_count(query_id) == 0;

        auto run_it = run.find(query_id);
        qe.missing_from_run = run_it == run.end();
        const ScoredList& ranking = qe.missing_from_run ? kEmpty : run_it->second;

        if (qe.no_relevant) {
            report.warnings.push_back("query " + query_id +
                                      " has no relevant documents; scored as 0");
        }
        if (qe.missing_from_run) {
            report.warnings.push_back("query " + query_id + " missing from run; scored as 0");
        }

        for (const MetricSpec& spec : specs) {
            double value = 0.0;
            switch (spec.kind) {
                case MetricSpec::Kind::Ndcg:
                    value = ndcg_at_k(ranking, judgments, spec.k);
                    break;
                case MetricSpec::Kind::Recall:
                    value = recall_at_k(ranking, judgments, spec.k, false);
                    break;
                case MetricSpec::Kind::RecallCapped:
                    value = recall_at_k(ranking, judgments, spec.k, true);
                    break;
            }
            qe.values.push_back(value);
        }
        report.per_query.push_back(std::move(qe));
    }

    report.means.assign(specs.size(), 0.0);
    if (!report.per_query.empty()) {
        for (const QueryEval& qe : report.per_query) {
            for (std::size_t i = 0; i < specs.size(); ++i) report.means[i] += qe.values[i];
        }
        for (double& mean : report.means) mean /= static_cast<double>(report.per_query.size());
    }
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json root;
    root["query_count"] = per_query.size();

    nlohmann::ordered_json means_obj;
    for (std::size_t i = 0; i < specs.size(); ++i) means_obj[specs[i].name()] = means[i];
    root["means"] = means_obj;

    nlohmann::ordered_json queries = nlohmann::ordered_json::array();
    for (const QueryEval& qe : per_query) {
        nlohmann::ordered_json entry;
        entry["query_id"] = qe.query_id;
        for (std::size_t i = 0; i < specs.size(); ++i) entry[specs[i].name()] = qe.values[i];
        if (qe.no_relevant) entry["no_relevant"] = true;
        if (qe.missing_from_run) entry["missing_from_run"] = true;
        queries.push_back(std::move(entry));
    }
    root["per_query"] = std::move(queries);
    root["warnings"] = warnings;
    return root.dump(2);
}

std::string EvalReport::to_table() const {
    std::string out;
    char buf[128];

    std::size_t id_width = 8;
    for (const QueryEval& qe : per_query) id_width = std::max(id_width, qe.query_id.size());

    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(id_width), "query");
    out += buf;
    for (const MetricSpec& spec : specs) {
        std::snprintf(buf, sizeof(buf), "  %15s", spec.name().c_str());
        out += buf;
    }
    out += '\n';

    for (const QueryEval& qe : per_query) {
        std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(id_width), qe.query_id.c_str());
        out += buf;
        for (double value : qe.values) {
            std::snprintf(buf, sizeof(buf), "  %15.4f", value);
            out += buf;
        }
        if (qe.no_relevant) out += "  (no relevant)";
        if (qe.missing_from_run) out += "  (missing)";
        out += '\n';
    }

    std::snprintf(buf, sizeof(buf), "%-*s", static_cast<int>(id_width), "mean");
    out += buf;
    for (double mean : means) {
        std::snprintf(buf, sizeof(buf), "  %15.4f", mean);
        out += buf;
    }
    out += '\n';
    return out;
}

}  // namespace requery
