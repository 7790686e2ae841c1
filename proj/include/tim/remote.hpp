// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/backend.hpp>

#include <json.hpp>

#include <chrono>
#include <condition_variable>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

// Client for OpenAI-compatible chat-completions endpoints.
namespace tim
{

struct RemoteConfig
{
    /// Falls back to $TIM_API_BASE when empty. Example: http://localhost:8000/v1
    std::string base_url;
    std::string model;
    std::string api_key_env = "TIM_API_KEY";
    std::size_t max_in_flight = 4;
    std::chrono::milliseconds timeout { std::chrono::seconds(120) };

    int max_attempts = 5;
    std::chrono::milliseconds initial_backoff { 500 };
    double backoff_multiplier = 2.0;
    std::chrono::milliseconds max_backoff { std::chrono::seconds(30) };

    /// Token bucket; 0 disables rate limiting.
    double requests_per_second = 0.0;
    double burst = 1.0;

    /// Sends vLLM's continue_final_message / add_generation_prompt so a
    /// trailing assistant message is continued rather than answered.
    bool continue_final_message = false;
};

/// The JSON body POSTed for `request`. Images are resolved to URLs here;
/// the only failure is an unreadable image file.
auto to_wire_body(const GenerationRequest& request, const RemoteConfig& config) -> Expected<nlohmann::json, std::string>;

/// Interprets a chat-completions response body.
auto parse_completion(const nlohmann::json& body, const GenerationRequest& request)
    -> Expected<GenerationResult, BackendError>;

class TokenBucket
{
  public:
    TokenBucket(double rate, double capacity);

    /// Blocks until a token is available; no-op when rate <= 0.
    void acquire();

  private:
    double _rate;
    double _capacity;
    double _tokens;
    std::chrono::steady_clock::time_point _last;
    std::mutex _mutex;
};

class RemoteBackend final: public Backend
{
  public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    RemoteBackend(std::string id, RemoteConfig config);

    /// Replaces the backoff sleep (tests).
    void set_sleeper(Sleeper sleeper) { _sleep = std::move(sleeper); }

    [[nodiscard]] auto id() const -> std::string override { return _id; }
    [[nodiscard]] auto max_in_flight() const -> std::size_t override { return _config.max_in_flight; }
    [[nodiscard]] auto config() const -> const RemoteConfig& { return _config; }

    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;

  private:
    auto attempt(const std::string& body) -> Expected<nlohmann::json, BackendError>;

    std::string _id;
    RemoteConfig _config;
    std::string _origin; // scheme://host[:port]
    std::string _path;   // .../chat/completions
    std::string _api_key;
    TokenBucket _bucket;
    Sleeper _sleep;

    std::mutex _slots_mutex;
    std::condition_variable _slots_cv;
    std::size_t _in_flight = 0;
};

/// Splits a base URL into origin and path prefix; nullopt when malformed.
auto split_base_url(std::string_view url) -> std::optional<std::pair<std::string, std::string>>;

} // namespace tim
