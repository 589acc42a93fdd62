#include <atomic>
#include <chrono>
#include <memory>
#include <thread>
#include <vector>

#include "doctest.h"
#include "httplib.h"
#include "json.hpp"

#include "requery/llm_gateway.hpp"
#include "test_util.hpp"

using namespace requery;

namespace {

ChatRequest simple_request(const std::string& text, const std::string& model = "gpt-4") {
    ChatRequest request;
    request.model = model;
    request.messages = {{"system", "sys"}, {"user", text}};
    return request;
}

/// Replays a fixed sequence of outcomes, then repeats the last one.
class ScriptedBackend : public ChatBackend {
  public:
    struct Step {
        enum class Kind { Ok, Http, Transport, Unhandled } kind = Kind::Ok;
        int status = 500;
        ChatResponse response;
    };

    static Step ok(std::string content, long long in_tokens = 10, long long out_tokens = 2) {
        Step step;
        step.response = {std::move(content), in_tokens, out_tokens, false};
        return step;
    }
    static Step http(int status) { return {Step::Kind::Http, status, {}}; }
    static Step transport() { return {Step::Kind::Transport, 0, {}}; }
    static Step unhandled() { return {Step::Kind::Unhandled, 0, {}}; }

    explicit ScriptedBackend(std::vector<Step> steps) : steps_(std::move(steps)) {}

    ChatResponse complete(const ChatRequest&) override {
        const std::size_t index = std::min(calls_++, steps_.size() - 1);
        const Step& step = steps_[index];
        switch (step.kind) {
            case Step::Kind::Http:
                throw HttpError(step.status, "scripted failure");
            case Step::Kind::Transport:
                throw TransportError("scripted transport failure");
            case Step::Kind::Unhandled:
                throw UnhandledPromptError("scripted unhandled prompt");
            case Step::Kind::Ok:
                break;
        }
        return step.response;
    }

    std::size_t calls() const { return calls_; }

  private:
    std::vector<Step> steps_;
    std::size_t calls_ = 0;
};

LlmGateway make_gateway(std::vector<ScriptedBackend::Step> steps, const std::string& cache_path = "",
                        RetryPolicy retry = {}) {
    return LlmGateway(std::make_unique<ScriptedBackend>(std::move(steps)), cache_path, retry);
}

}  // namespace

TEST_CASE("cache key canonicalization") {
    const std::string key = simple_request("hello").cache_key();
    CHECK(key == simple_request("hello").cache_key());
    CHECK(key != simple_request("other").cache_key());
    CHECK(key != simple_request("hello", "gpt-3.5-turbo").cache_key());

    ChatRequest capped = simple_request("hello");
    capped.max_output_tokens = 20;
    CHECK(key != capped.cache_key());

    ChatRequest warm = simple_request("hello");
    warm.temperature = 0.7;
    CHECK(key != warm.cache_key());
}

TEST_CASE("identical requests hit the cache") {
    LlmGateway gateway = make_gateway({ScriptedBackend::ok("first"), ScriptedBackend::ok("second")});

    const ChatResponse first = gateway.complete(simple_request("hello"));
    CHECK(first.content == "first");
    CHECK_FALSE(first.cached);

    const ChatResponse second = gateway.complete(simple_request("hello"));
    CHECK(second.content == "first");  // served from cache, not the script
    CHECK(second.cached);

    const GatewayStats stats = gateway.stats();
    CHECK(stats.backend_calls == 1);
    CHECK(stats.cache_hits == 1);

    const CostReport report = gateway.report();
    CHECK(report.usage.at("gpt-4").calls == 1);
    CHECK(report.usage.at("gpt-4").cached_hits == 1);
    CHECK(report.usage.at("gpt-4").input_tokens == 10);  // counted once

    const ChatResponse fresh = gateway.complete(simple_request("different"));
    CHECK(fresh.content == "second");
    CHECK(gateway.stats().backend_calls == 2);
}

TEST_CASE("cache persists across gateway instances") {
    testutil::TempDir dir("cache");
    const std::string cache_path = dir.file("llm_cache.jsonl");

    {
        LlmGateway gateway = make_gateway({ScriptedBackend::ok("persisted", 7, 3)}, cache_path);
        const ChatResponse response = gateway.complete(simple_request("hello"));
        CHECK(response.content == "persisted");
    }

    LlmGateway reloaded = make_gateway({ScriptedBackend::ok("SHOULD NOT BE SERVED")}, cache_path);
    const ChatResponse response = reloaded.complete(simple_request("hello"));
    CHECK(response.content == "persisted");
    CHECK(response.cached);
    CHECK(response.input_tokens == 7);
    CHECK(response.output_tokens == 3);
    CHECK(reloaded.stats().backend_calls == 0);
}

TEST_CASE("malformed cache lines are skipped with a warning") {
    testutil::TempDir dir("cache_bad");
    const std::string cache_path = dir.file("llm_cache.jsonl");

    {
        LlmGateway gateway = make_gateway({ScriptedBackend::ok("kept")}, cache_path);
        gateway.complete(simple_request("hello"));
    }
    // Simulate a torn final write.
    {
        std::ofstream out(cache_path, std::ios::app);
        out << "{\"request\": {\"model\": \"gpt";
    }

    LlmGateway gateway = make_gateway({ScriptedBackend::ok("fresh")}, cache_path);
    REQUIRE(gateway.warnings().size() == 1);
    CHECK(gateway.warnings()[0].find("malformed cache line") != std::string::npos);
    CHECK(gateway.complete(simple_request("hello")).content == "kept");
    CHECK(gateway.complete(simple_request("hello")).cached);
}

TEST_CASE("retriable failures are retried with exponential backoff") {
    LlmGateway gateway = make_gateway(
        {ScriptedBackend::http(500), ScriptedBackend::http(500), ScriptedBackend::ok("recovered")});
    std::vector<long long> delays;
    gateway.set_sleeper([&](std::chrono::milliseconds d) { delays.push_back(d.count()); });

    const ChatResponse response = gateway.complete(simple_request("flaky"));
    CHECK(response.content == "recovered");
    CHECK(gateway.stats().retries == 2);
    CHECK(gateway.stats().backend_calls == 1);  // one logical call

    REQUIRE(delays.size() == 2);
    CHECK(delays[0] == 1000);
    CHECK(delays[1] == 2000);
}

TEST_CASE("429 is retriable, other 4xx are not") {
    LlmGateway throttled = make_gateway({ScriptedBackend::http(429), ScriptedBackend::ok("ok")});
    throttled.set_sleeper([](std::chrono::milliseconds) {});
    CHECK(throttled.complete(simple_request("x")).content == "ok");
    CHECK(throttled.stats().retries == 1);

    LlmGateway rejected = make_gateway({ScriptedBackend::http(400), ScriptedBackend::ok("never")});
    rejected.set_sleeper([](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(rejected.complete(simple_request("x")), HttpError);
    CHECK(rejected.stats().retries == 0);
}

TEST_CASE("unhandled prompt errors are never retried") {
    LlmGateway gateway = make_gateway({ScriptedBackend::unhandled(), ScriptedBackend::ok("never")});
    gateway.set_sleeper([](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(gateway.complete(simple_request("x")), UnhandledPromptError);
    CHECK(gateway.stats().retries == 0);
}

TEST_CASE("exhausted retries raise a transport error") {
    RetryPolicy retry;
    retry.max_retries = 2;
    LlmGateway gateway = make_gateway({ScriptedBackend::transport()}, "", retry);
    std::vector<long long> delays;
    gateway.set_sleeper([&](std::chrono::milliseconds d) { delays.push_back(d.count()); });

    CHECK_THROWS_WITH_AS(gateway.complete(simple_request("down")),
                         doctest::Contains("giving up after 3 attempts"), TransportError);
    CHECK(gateway.stats().retries == 2);
    CHECK(gateway.stats().backend_calls == 0);
    REQUIRE(delays.size() == 2);
    CHECK(delays[0] == 1000);
    CHECK(delays[1] == 2000);
}

TEST_CASE("cost report applies the default rate table") {
    std::vector<ScriptedBackend::Step> steps;
    for (int i = 0; i < 4; ++i) steps.push_back(ScriptedBackend::ok("r", 1000, 500));
    LlmGateway gateway = make_gateway(std::move(steps));

    gateway.complete(simple_request("a", "gpt-4"));
    gateway.complete(simple_request("b", "gpt-4"));
    gateway.complete(simple_request("c", "gpt-3.5-turbo"));
    gateway.complete(simple_request("d", "unknown-model"));

    const CostReport report = gateway.report();
    // gpt-4: 2 * (1000 * 0.03 + 500 * 0.06) / 1000 = 0.12
    CHECK(report.model_usd("gpt-4") == doctest::Approx(0.12).epsilon(1e-9));
    // gpt-3.5-turbo: (1000 * 0.0015 + 500 * 0.002) / 1000 = 0.0025
    CHECK(report.model_usd("gpt-3.5-turbo") == doctest::Approx(0.0025).epsilon(1e-9));
    CHECK(report.model_usd("unknown-model") == 0.0);
    CHECK(report.total_usd == doctest::Approx(0.1225).epsilon(1e-9));

    const std::string json = report.to_json();
    CHECK(json.find("\"gpt-4\"") != std::string::npos);
    CHECK(json.find("total_usd") != std::string::npos);
}

TEST_CASE("set_rates overrides and extends the table") {
    LlmGateway gateway = make_gateway({ScriptedBackend::ok("r", 2000, 0)});
    gateway.set_rates("custom", {0.01, 0.02});
    gateway.complete(simple_request("a", "custom"));
    CHECK(gateway.report().model_usd("custom") == doctest::Approx(0.02).epsilon(1e-9));
}

TEST_CASE("call log replays into the usage totals") {
    std::vector<ScriptedBackend::Step> steps;
    for (int i = 0; i < 3; ++i) steps.push_back(ScriptedBackend::ok("r", 100 + i, 10 + i));
    LlmGateway gateway = make_gateway(std::move(steps));

    gateway.complete(simple_request("a"));
    gateway.complete(simple_request("b", "gpt-3.5-turbo"));
    gateway.complete(simple_request("a"));  // cached
    gateway.complete(simple_request("c"));

    const std::vector<CallRecord> log = gateway.call_log();
    REQUIRE(log.size() == 4);
    CHECK(log[2].cached);

    std::map<std::string, ModelUsage> replayed;
    for (const CallRecord& record : log) {
        ModelUsage& usage = replayed[record.model];
        if (record.cached) {
            ++usage.cached_hits;
        } else {
            ++usage.calls;
            usage.input_tokens += record.input_tokens;
            usage.output_tokens += record.output_tokens;
        }
    }
    const CostReport report = gateway.report();
    for (const auto& [model, usage] : report.usage) {
        CAPTURE(model);
        CHECK(usage.calls == replayed[model].calls);
        CHECK(usage.cached_hits == replayed[model].cached_hits);
        CHECK(usage.input_tokens == replayed[model].input_tokens);
        CHECK(usage.output_tokens == replayed[model].output_tokens);
    }
}

TEST_CASE("concurrent identical requests coalesce into one backend call") {
    class SlowBackend : public ChatBackend {
      public:
        ChatResponse complete(const ChatRequest&) override {
            calls.fetch_add(1);
            std::this_thread::sleep_for(std::chrono::milliseconds(50));
            return {"slow", 1, 1, false};
        }
        std::atomic<int> calls{0};
    };

    auto backend = std::make_unique<SlowBackend>();
    SlowBackend* raw = backend.get();
    LlmGateway gateway(std::move(backend), "");

    std::vector<std::thread> threads;
    std::atomic<int> cached_count{0};
    for (int i = 0; i < 8; ++i) {
        threads.emplace_back([&] {
            const ChatResponse response = gateway.complete(simple_request("same"));
            CHECK(response.content == "slow");
            if (response.cached) cached_count.fetch_add(1);
        });
    }
    for (std::thread& t : threads) t.join();

    CHECK(raw->calls.load() == 1);
    CHECK(gateway.stats().backend_calls == 1);
    CHECK(cached_count.load() == 7);
}

TEST_CASE("http backend speaks the chat completions protocol") {
    httplib::Server server;
    std::string seen_path;
    std::string seen_auth;
    nlohmann::json seen_body;
    std::atomic<int> hits{0};

    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        seen_path = req.path;
        seen_auth = req.get_header_value("Authorization");
        seen_body = nlohmann::json::parse(req.body);
        if (hits == 1) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        nlohmann::json choice;
        choice["message"] = {{"role", "assistant"}, {"content", "pong"}};
        nlohmann::json reply;
        reply["choices"] = nlohmann::json::array({choice});
        reply["usage"] = {{"prompt_tokens", 12}, {"completion_tokens", 3}};
        res.set_content(reply.dump(), "application/json");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    {
        auto backend = std::make_unique<HttpBackend>(
            "http://127.0.0.1:" + std::to_string(port) + "/v1", "test-key");
        LlmGateway gateway(std::move(backend), "");
        gateway.set_sleeper([](std::chrono::milliseconds) {});

        ChatRequest request = simple_request("ping");
        request.max_output_tokens = 20;
        const ChatResponse response = gateway.complete(request);

        CHECK(response.content == "pong");
        CHECK(response.input_tokens == 12);
        CHECK(response.output_tokens == 3);
        CHECK(gateway.stats().retries == 1);  // the 429 round

        CHECK(seen_path == "/v1/chat/completions");
        CHECK(seen_auth == "Bearer test-key");
        CHECK(seen_body["model"] == "gpt-4");
        CHECK(seen_body["max_tokens"] == 20);
        CHECK_FALSE(seen_body.contains("max_output_tokens"));
        CHECK(seen_body["messages"].size() == 2);
        CHECK(seen_body["messages"][1]["content"] == "ping");
    }

    server.stop();
    server_thread.join();
}

TEST_CASE("http backend surfaces malformed and error responses") {
    httplib::Server server;
    server.Post("/bad-json/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("this is not json", "text/plain");
    });
    server.Post("/teapot/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.status = 418;
        res.set_content("short and stout", "text/plain");
    });

    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread server_thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    {
        HttpBackend backend(base + "/bad-json", "");
        CHECK_THROWS_AS(backend.complete(simple_request("x")), TransportError);

        HttpBackend teapot(base + "/teapot", "");
        try {
            teapot.complete(simple_request("x"));
            FAIL("expected HttpError");
        } catch (const HttpError& e) {
            CHECK(e.status() == 418);
            CHECK_FALSE(e.retriable());
            CHECK(e.body() == "short and stout");
        }
    }

    server.stop();
    server_thread.join();

    // Nothing listens here; connection failures are transport errors.
    HttpBackend unreachable("http://127.0.0.1:1", "");
    CHECK_THROWS_AS(unreachable.complete(simple_request("x")), TransportError);

    CHECK_THROWS_AS(HttpBackend("no-scheme.example.com", ""), std::invalid_argument);
}
