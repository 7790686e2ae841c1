// SPDX-License-Identifier: Apache-2.0
#include "stub_server.hpp"
#include "support.hpp"

#include <tim/remote.hpp>

#include <doctest.h>

#include <atomic>
#include <cstdlib>

using namespace tim;
using tim::testing::StubServer;

namespace
{

auto completion(std::string content, std::string finish = "stop", nlohmann::json stop_reason = nullptr) -> std::string
{
    return nlohmann::json { { "choices",
                              { { { "index", 0 },
                                  { "message", { { "role", "assistant" }, { "content", content } } },
                                  { "finish_reason", finish },
                                  { "stop_reason", stop_reason } } } } }
        .dump();
}

auto wire_request() -> GenerationRequest
{
    return GenerationRequest {
        .messages = { { Role::System, "You are a verifier.", {} },
                      { Role::User, "Check this.", { ImageRef { .source = "data:image/png;base64,AAAA" } } },
                      { Role::Assistant, "### Paragraph 1", {} } },
        .stop_sequences = { "</tool_call>" },
        .max_tokens = 512,
        .temperature = 0.0,
    };
}

auto config_for(const StubServer& s) -> RemoteConfig
{
    return RemoteConfig {
        .base_url = s.base_url(),
        .model = "test-model",
        .api_key_env = "TIM_TEST_REMOTE_KEY",
        .timeout = std::chrono::seconds(5),
        .initial_backoff = std::chrono::milliseconds(100),
    };
}

} // namespace

TEST_SUITE("remote")
{
    TEST_CASE("wire body matches the recorded snapshot")
    {
        auto body = to_wire_body(wire_request(), { .model = "test-model" });
        REQUIRE(body);
        auto const snapshot = nlohmann::json::parse(testing::read_file(testing::data_path("wire_request.json")));
        CHECK(*body == snapshot);

        auto cont = to_wire_body(wire_request(), { .model = "test-model", .continue_final_message = true });
        REQUIRE(cont);
        CHECK((*cont)["continue_final_message"] == true);
        CHECK((*cont)["add_generation_prompt"] == false);
    }

    TEST_CASE("request goes over HTTP with the bearer token and parses the reply")
    {
        ::setenv("TIM_TEST_REMOTE_KEY", "sk-test", 1);
        auto server = StubServer([](int, httplib::Response& res) {
            res.set_content(completion("<tool_call>\n{}\n", "stop", "</tool_call>"), "application/json");
        });
        auto backend = RemoteBackend("remote", config_for(server));
        auto r = backend.generate(wire_request());
        REQUIRE(r);
        CHECK(r->text == "<tool_call>\n{}\n");
        CHECK(r->stop_reason == StopReason::StopSequence);
        CHECK(r->matched_stop == "</tool_call>");
        REQUIRE(server.bodies().size() == 1);
        CHECK(nlohmann::json::parse(server.bodies()[0])
              == nlohmann::json::parse(testing::read_file(testing::data_path("wire_request.json"))));
        CHECK(server.auth()[0] == "Bearer sk-test");
        ::unsetenv("TIM_TEST_REMOTE_KEY");
    }

    TEST_CASE("finish reasons map to stop reasons")
    {
        auto const req = wire_request();
        auto const parse = [&](std::string content, std::string finish, nlohmann::json stop_reason = nullptr) {
            return parse_completion(nlohmann::json::parse(completion(std::move(content), std::move(finish), stop_reason)),
                                    req);
        };
        auto r = parse("partial", "length");
        REQUIRE(r);
        CHECK(r->stop_reason == StopReason::LengthLimit);
        r = parse("done", "stop", 151645);
        REQUIRE(r);
        CHECK(r->stop_reason == StopReason::EndOfMessage);
        r = parse("x", "stop", "</tool_call>");
        REQUIRE(r);
        CHECK(r->stop_reason == StopReason::StopSequence);
        // A server that ignores stop and returns the marker is truncated locally.
        r = parse("abc</tool_call>tail", "stop", 7);
        REQUIRE(r);
        CHECK(r->text == "abc");
        CHECK(r->stop_reason == StopReason::StopSequence);
        r = parse("x", "eos");
        REQUIRE(r);
        CHECK(r->stop_reason == StopReason::EndOfMessage);
        CHECK_FALSE(parse("x", "content_filter"));
        auto bad = parse_completion(nlohmann::json { { "choices", nlohmann::json::array() } }, req);
        REQUIRE_FALSE(bad);
        CHECK(bad.error().kind == BackendErrorKind::ProtocolViolation);
    }

    TEST_CASE("429 and 5xx are retried with backoff")
    {
        auto server = StubServer([](int hit, httplib::Response& res) {
            if (hit == 1)
            {
                res.status = 429;
                res.set_header("Retry-After", "2");
            }
            else if (hit == 2)
                res.status = 503;
            else
                res.set_content(completion("ok"), "application/json");
        });
        auto backend = RemoteBackend("remote", config_for(server));
        auto waits = std::vector<std::chrono::milliseconds> {};
        backend.set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d); });
        auto r = backend.generate(wire_request());
        REQUIRE(r);
        CHECK(r->text == "ok");
        CHECK(server.bodies().size() == 3);
        REQUIRE(waits.size() == 2);
        CHECK(waits[0] == std::chrono::seconds(2)); // Retry-After beats the 100 ms backoff
        CHECK(waits[1] == std::chrono::milliseconds(200));
    }

    TEST_CASE("exhausted retries surface rate_limited")
    {
        auto server = StubServer([](int, httplib::Response& res) { res.status = 429; });
        auto cfg = config_for(server);
        cfg.max_attempts = 3;
        auto backend = RemoteBackend("remote", cfg);
        auto sleeps = 0;
        backend.set_sleeper([&](std::chrono::milliseconds) { ++sleeps; });
        auto r = backend.generate(wire_request());
        REQUIRE_FALSE(r);
        CHECK(r.error().kind == BackendErrorKind::RateLimited);
        CHECK(server.bodies().size() == 3);
        CHECK(sleeps == 2);
    }

    TEST_CASE("auth and client errors are not retried")
    {
        auto status = std::atomic<int> { 401 };
        auto server = StubServer([&](int, httplib::Response& res) { res.status = status; });
        auto backend = RemoteBackend("remote", config_for(server));
        backend.set_sleeper([](std::chrono::milliseconds) {});
        auto r = backend.generate(wire_request());
        REQUIRE_FALSE(r);
        CHECK(r.error().kind == BackendErrorKind::Auth);
        status = 400;
        r = backend.generate(wire_request());
        REQUIRE_FALSE(r);
        CHECK(r.error().kind == BackendErrorKind::InvalidRequest);
        CHECK(server.bodies().size() == 2);
    }

    TEST_CASE("unreachable host is a network error and a bad body a protocol violation")
    {
        auto server = StubServer([](int, httplib::Response& res) { res.set_content("not json", "text/plain"); });
        auto backend = RemoteBackend("remote", config_for(server));
        auto r = backend.generate(wire_request());
        REQUIRE_FALSE(r);
        CHECK(r.error().kind == BackendErrorKind::ProtocolViolation);

        auto cfg = RemoteConfig { .base_url = "http://127.0.0.1:1/v1", .model = "m", .max_attempts = 2 };
        auto dead = RemoteBackend("dead", cfg);
        dead.set_sleeper([](std::chrono::milliseconds) {});
        r = dead.generate(wire_request());
        REQUIRE_FALSE(r);
        CHECK((r.error().kind == BackendErrorKind::Network || r.error().kind == BackendErrorKind::Timeout));
    }

    TEST_CASE("base url splitting")
    {
        CHECK(split_base_url("http://localhost:8000/v1") == std::pair<std::string, std::string> { "http://localhost:8000", "/v1" });
        CHECK(split_base_url("https://api.example.com") == std::pair<std::string, std::string> { "https://api.example.com", "" });
        CHECK(split_base_url("https://api.example.com/v1/") == std::pair<std::string, std::string> { "https://api.example.com", "/v1" });
        CHECK_FALSE(split_base_url("localhost:8000"));
        CHECK_FALSE(split_base_url(""));
    }

    TEST_CASE("max in flight bounds concurrent requests")
    {
        auto active = std::atomic<int> { 0 };
        auto peak = std::atomic<int> { 0 };
        auto server = StubServer([&](int, httplib::Response& res) {
            auto const now = ++active;
            for (auto p = peak.load(); now > p && !peak.compare_exchange_weak(p, now);) {}
            std::this_thread::sleep_for(std::chrono::milliseconds(40));
            --active;
            res.set_content(completion("ok"), "application/json");
        });
        auto cfg = config_for(server);
        cfg.max_in_flight = 2;
        auto backend = RemoteBackend("remote", cfg);
        auto ok = std::atomic<int> { 0 };
        auto threads = std::vector<std::thread> {};
        for (auto i = 0; i < 6; ++i)
            threads.emplace_back([&] {
                if (backend.generate(wire_request()))
                    ++ok;
            });
        for (auto& t: threads)
            t.join();
        CHECK(ok == 6);
        CHECK(peak == 2);
    }
}
