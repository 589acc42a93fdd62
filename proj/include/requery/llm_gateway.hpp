#pragma once

#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace requery {

struct ChatMessage {
    std::string role;  // "system", "user" or "assistant"
    std::string content;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<int> max_output_tokens;

    /// Canonical serialization of the request; doubles as the cache key.
    /// Two requests collide iff they are field-for-field identical.
    std::string cache_key() const;
};

struct ChatResponse {
    std::string content;
    long long input_tokens = 0;
    long long output_tokens = 0;
    bool cached = false;
};

class GatewayError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Network-level failure (also raised when retries are exhausted). Retriable.
class TransportError : public GatewayError {
    using GatewayError::GatewayError;
};

/// Non-2xx HTTP response. 429 and 5xx are retried; other statuses are not.
class HttpError : public GatewayError {
  public:
    HttpError(int status, std::string body);
    int status() const { return status_; }
    const std::string& body() const { return body_; }
    bool retriable() const { return status_ == 429 || status_ >= 500; }

  private:
    int status_;
    std::string body_;
};

/// Raised by the mock backend for a prompt no rule matches. Never retried.
class UnhandledPromptError : public GatewayError {
    using GatewayError::GatewayError;
};

class ChatBackend {
  public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

/// OpenAI-compatible endpoint: POST {base_url}/chat/completions.
class HttpBackend : public ChatBackend {
  public:
    /// base_url like "https://api.openai.com/v1" or "http://127.0.0.1:8089/v1".
    /// https requires the build to have TLS support.
    HttpBackend(std::string base_url, std::string api_key);
    ChatResponse complete(const ChatRequest& request) override;

  private:
    std::string host_;         // scheme://host[:port]
    std::string path_prefix_;  // e.g. "/v1"
    std::string api_key_;
};

struct ModelRates {
    double input_per_1k = 0.0;
    double output_per_1k = 0.0;
};

/// Per-model usage counters. Cached hits bump only cached_hits; tokens and
/// cost reflect real backend traffic.
struct ModelUsage {
    long long calls = 0;
    long long cached_hits = 0;
    long long input_tokens = 0;
    long long output_tokens = 0;
};

struct CostReport {
    std::map<std::string, ModelUsage> usage;
    std::map<std::string, ModelRates> rates;
    double total_usd = 0.0;

    double model_usd(const std::string& model) const;
    std::string to_json() const;
};

struct RetryPolicy {
    int max_retries = 5;
    std::chrono::milliseconds base_delay{1000};
    double multiplier = 2.0;
};

struct GatewayStats {
    long long backend_calls = 0;
    long long cache_hits = 0;
    long long retries = 0;
};

/// One record per complete() call, in order. Lets tests replay the ledger.
struct CallRecord {
    std::string model;
    std::string key;
    long long input_tokens = 0;
    long long output_tokens = 0;
    bool cached = false;
};

/// Single chokepoint for model calls: cache in front, retries behind,
/// ledger across everything. Safe for concurrent callers; identical
/// concurrent requests are coalesced into one backend call.
class LlmGateway {
  public:
    /// cache_path: JSONL file for the persistent cache, created on first
    /// write; empty string keeps the cache in memory only. Malformed
    /// trailing lines (torn writes) are skipped with a warning.
    LlmGateway(std::unique_ptr<ChatBackend> backend, std::string cache_path,
               RetryPolicy retry = {});

    ChatResponse complete(const ChatRequest& request);

    void set_rates(const std::string& model, ModelRates rates);
    CostReport report() const;
    GatewayStats stats() const;
    std::vector<CallRecord> call_log() const;
    std::vector<std::string> warnings() const;

    /// Test seam: replaces the between-retries sleep.
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper);

    /// Default rate table: gpt-4 at 0.03/0.06 per 1k tokens in/out,
    /// gpt-3.5-turbo at 0.0015/0.002. Unlisted models cost 0.
    static std::map<std::string, ModelRates> default_rates();

  private:
    ChatResponse call_with_retries(const ChatRequest& request);
    void load_cache();
    void append_cache_line(const ChatRequest& request, const ChatResponse& response);

    std::unique_ptr<ChatBackend> backend_;
    std::string cache_path_;
    RetryPolicy retry_;
    std::function<void(std::chrono::milliseconds)> sleeper_;

    mutable std::mutex mutex_;
    std::condition_variable in_flight_cv_;
    std::set<std::string> in_flight_;
    std::map<std::string, ChatResponse> cache_;
    std::map<std::string, ModelUsage> usage_;
    std::map<std::string, ModelRates> rates_ = default_rates();
    GatewayStats stats_;
    std::vector<CallRecord> call_log_;
    std::vector<std::string> warnings_;
};

}  // namespace requery
