#include "requery/llm_gateway.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"

namespace requery {

namespace {

nlohmann::json request_json(const ChatRequest& request) {
    nlohmann::json msgs = nlohmann::json::array();
    for (const ChatMessage& m : request.messages) {
        msgs.push_back({{"role", m.role}, {"content", m.content}});
    }
    nlohmann::json body;
    body["model"] = request.model;
    body["messages"] = std::move(msgs);
    body["temperature"] = request.temperature;
    if (request.max_output_tokens) {
        body["max_output_tokens"] = *request.max_output_tokens;
    } else {
        body["max_output_tokens"] = nullptr;
    }
    return body;
}

}  // namespace

std::string ChatRequest::cache_key() const {
    // nlohmann::json orders object keys, so the dump is canonical.
    return request_json(*this).dump();
}

HttpError::HttpError(int status, std::string body)
    : GatewayError("HTTP " + std::to_string(status) + ": " + body),
      status_(status),
      body_(std::move(body)) {}

HttpBackend::HttpBackend(std::string base_url, std::string api_key) : api_key_(std::move(api_key)) {
    while (!base_url.empty() && base_url.back() == '/') base_url.pop_back();
    const auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("base_url must start with http:// or https://");
    }
    const auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        host_ = base_url;
    } else {
        host_ = base_url.substr(0, path_start);
        path_prefix_ = base_url.substr(path_start);
    }
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (host_.rfind("https://", 0) == 0) {
        throw std::invalid_argument("this build lacks TLS support; use an http:// endpoint");
    }
#endif
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    nlohmann::json body = request_json(request);
    // The wire format uses max_tokens; the null placeholder exists only in
    // the cache key.
    body.erase("max_output_tokens");
    if (request.max_output_tokens) body["max_tokens"] = *request.max_output_tokens;

    httplib::Client client(host_);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(300, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

    auto res = client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                           "application/json");
    if (!res) {
        throw TransportError("request to " + host_ + " failed: " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw HttpError(res->status, res->body);
    }

    nlohmann::json parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty() ||
        !parsed["choices"][0].contains("message")) {
        throw TransportError("malformed completion response: " + res->body.substr(0, 200));
    }

    ChatResponse out;
    out.content = parsed["choices"][0]["message"].value("content", "");
    if (parsed.contains("usage")) {
        out.input_tokens = parsed["usage"].value("prompt_tokens", 0LL);
        out.output_tokens = parsed["usage"].value("completion_tokens", 0LL);
    }
    return out;
}

double CostReport::model_usd(const std::string& model) const {
    auto usage_it = usage.find(model);
    if (usage_it == usage.end()) return 0.0;
    ModelRates r;
    auto rates_it = rates.find(model);
    if (rates_it != rates.end()) r = rates_it->second;
    return (static_cast<double>(usage_it->second.input_tokens) * r.input_per_1k +
            static_cast<double>(usage_it->second.output_tokens) * r.output_per_1k) /
           1000.0;
}

std::string CostReport::to_json() const {
    nlohmann::ordered_json models = nlohmann::ordered_json::object();
    for (const auto& [model, u] : usage) {
        models[model] = {{"calls", u.calls},
                         {"cached_hits", u.cached_hits},
                         {"input_tokens", u.input_tokens},
                         {"output_tokens", u.output_tokens},
                         {"usd", model_usd(model)}};
    }
    nlohmann::ordered_json root;
    root["models"] = std::move(models);
    root["total_usd"] = total_usd;
    return root.dump(2);
}

std::map<std::string, ModelRates> LlmGateway::default_rates() {
    return {
        {"gpt-4", {0.03, 0.06}},
        {"gpt-3.5-turbo", {0.0015, 0.002}},
    };
}

LlmGateway::LlmGateway(std::unique_ptr<ChatBackend> backend, std::string cache_path,
                       RetryPolicy retry)
    : backend_(std::move(backend)), cache_path_(std::move(cache_path)), retry_(retry) {
    if (!backend_) throw std::invalid_argument("gateway needs a backend");
    sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    load_cache();
}

void LlmGateway::set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) {
    std::lock_guard<std::mutex> lock(mutex_);
    sleeper_ = std::move(sleeper);
}

void LlmGateway::set_rates(const std::string& model, ModelRates rates) {
    std::lock_guard<std::mutex> lock(mutex_);
    rates_[model] = rates;
}

void LlmGateway::load_cache() {
    if (cache_path_.empty()) return;
    std::ifstream in(cache_path_);
    if (!in) return;  // no cache yet

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json record = nlohmann::json::parse(line, nullptr, false);
        if (record.is_discarded() || !record.contains("request") || !record.contains("response")) {
            // Torn final write from a crashed run is expected; anything else
            // is still not worth failing over, the entry just gets refetched.
            warnings_.push_back(cache_path_ + ":" + std::to_string(line_no) +
                                ": skipping malformed cache line");
            continue;
        }
        ChatResponse response;
        response.content = record["response"].value("content", "");
        response.input_tokens = record["response"].value("input_tokens", 0LL);
        response.output_tokens = record["response"].value("output_tokens", 0LL);
        cache_[record["request"].dump()] = std::move(response);
    }
}

void LlmGateway::append_cache_line(const ChatRequest& request, const ChatResponse& response) {
    if (cache_path_.empty()) return;
    std::ofstream out(cache_path_, std::ios::app);
    if (!out) {
        warnings_.push_back(cache_path_ + ": cannot append to cache file");
        return;
    }
    nlohmann::json record;
    record["request"] = request_json(request);
    record["response"] = {{"content", response.content},
                          {"input_tokens", response.input_tokens},
                          {"output_tokens", response.output_tokens}};
    out << record.dump() << '\n';
}

ChatResponse LlmGateway::call_with_retries(const ChatRequest& request) {
    std::string last_error;
    for (int attempt = 0;; ++attempt) {
        try {
            return backend_->complete(request);
        } catch (const TransportError& e) {
            last_error = e.what();
        } catch (const HttpError& e) {
            if (!e.retriable()) throw;
            last_error = e.what();
        }
        if (attempt >= retry_.max_retries) break;

        std::function<void(std::chrono::milliseconds)> sleeper;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            ++stats_.retries;
            sleeper = sleeper_;
        }
        const auto delay = std::chrono::milliseconds(static_cast<long long>(
            static_cast<double>(retry_.base_delay.count()) * std::pow(retry_.multiplier, attempt)));
        sleeper(delay);
    }
    throw TransportError("giving up after " + std::to_string(retry_.max_retries + 1) +
                         " attempts; last error: " + last_error);
}

ChatResponse LlmGateway::complete(const ChatRequest& request) {
    if (request.messages.empty()) throw std::invalid_argument("request has no messages");
    const std::string key = request.cache_key();

    {
        std::unique_lock<std::mutex> lock(mutex_);
        for (;;) {
            auto it = cache_.find(key);
            if (it != cache_.end()) {
                ChatResponse response = it->second;
                response.cached = true;
                auto& usage = usage_[request.model];
                ++usage.cached_hits;
                ++stats_.cache_hits;
                call_log_.push_back(
                    {request.model, key, response.input_tokens, response.output_tokens, true});
                return response;
            }
            if (!in_flight_.count(key)) break;
            // Another thread is fetching this exact request; share its result.
            in_flight_cv_.wait(lock);
        }
        in_flight_.insert(key);
    }

    ChatResponse response;
    try {
        response = call_with_retries(request);
    } catch (...) {
        std::lock_guard<std::mutex> lock(mutex_);
        in_flight_.erase(key);
        in_flight_cv_.notify_all();
        throw;
    }

    std::lock_guard<std::mutex> lock(mutex_);
    response.cached = false;
    cache_[key] = response;
    append_cache_line(request, response);
    auto& usage = usage_[request.model];
    ++usage.calls;
    usage.input_tokens += response.input_tokens;
    usage.output_tokens += response.output_tokens;
    ++stats_.backend_calls;
    call_log_.push_back({request.model, key, response.input_tokens, response.output_tokens, false});
    in_flight_.erase(key);
    in_flight_cv_.notify_all();
    return response;
}

CostReport LlmGateway::report() const {
    std::lock_guard<std::mutex> lock(mutex_);
    CostReport report;
    report.usage = usage_;
    report.rates = rates_;
    for (const auto& [model, _] : usage_) {
        report.total_usd += report.model_usd(model);
    }
    return report;
}

GatewayStats LlmGateway::stats() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return stats_;
}

std::vector<CallRecord> LlmGateway::call_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return call_log_;
}

std::vector<std::string> LlmGateway::warnings() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return warnings_;
}

}  // namespace requery
