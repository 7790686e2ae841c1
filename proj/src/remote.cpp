// SPDX-License-Identifier: Apache-2.0
#include <tim/image.hpp>
#include <tim/remote.hpp>

#include <httplib.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace tim
{

namespace
{

auto transient(const BackendError& e) -> bool
{
    switch (e.kind)
    {
        case BackendErrorKind::RateLimited:
        case BackendErrorKind::Timeout: return true;
        case BackendErrorKind::Network: return e.status == 0 || e.status >= 500;
        default: return false;
    }
}

auto excerpt(const std::string& body) -> std::string
{
    constexpr auto Limit = std::size_t { 200 };
    return body.size() <= Limit ? body : body.substr(0, Limit) + "...";
}

auto retry_after(const httplib::Response& res) -> std::optional<std::chrono::milliseconds>
{
    if (!res.has_header("Retry-After"))
        return std::nullopt;
    auto const value = res.get_header_value("Retry-After");
    char* end = nullptr;
    auto const seconds = std::strtod(value.c_str(), &end);
    if (end == value.c_str() || !std::isfinite(seconds) || seconds < 0)
        return std::nullopt;
    return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

auto protocol(std::string message) -> Unexpected<BackendError>
{
    return unexpected(BackendError { .kind = BackendErrorKind::ProtocolViolation, .message = std::move(message) });
}

} // namespace

auto split_base_url(std::string_view url) -> std::optional<std::pair<std::string, std::string>>
{
    auto const scheme = url.find("://");
    if (scheme == std::string_view::npos)
        return std::nullopt;
    auto const name = url.substr(0, scheme);
    if (name != "http" && name != "https")
        return std::nullopt;
    auto const slash = url.find('/', scheme + 3);
    auto origin = std::string(url.substr(0, slash));
    auto path = slash == std::string_view::npos ? std::string {} : std::string(url.substr(slash));
    if (origin.size() <= scheme + 3)
        return std::nullopt;
    while (!path.empty() && path.back() == '/')
        path.pop_back();
    return std::pair { origin, path };
}

auto to_wire_body(const GenerationRequest& request, const RemoteConfig& config) -> Expected<nlohmann::json, std::string>
{
    auto messages = nlohmann::json::array();
    for (auto const& m: request.messages)
    {
        auto message = nlohmann::json { { "role", to_string(m.role) } };
        if (m.images.empty())
            message["content"] = m.text;
        else
        {
            auto parts = nlohmann::json::array();
            parts.push_back({ { "type", "text" }, { "text", m.text } });
            for (auto const& image: m.images)
            {
                auto url = to_wire_url(image);
                if (!url)
                    return unexpected(url.error());
                parts.push_back({ { "type", "image_url" }, { "image_url", { { "url", *url } } } });
            }
            message["content"] = parts;
        }
        messages.push_back(std::move(message));
    }
    auto body = nlohmann::json {
        { "model", config.model },
        { "messages", messages },
        { "stop", request.stop_sequences },
        { "max_tokens", request.max_tokens },
        { "temperature", request.temperature },
    };
    if (config.continue_final_message && !request.messages.empty()
        && request.messages.back().role == Role::Assistant)
    {
        body["continue_final_message"] = true;
        body["add_generation_prompt"] = false;
    }
    return body;
}

auto parse_completion(const nlohmann::json& body, const GenerationRequest& request)
    -> Expected<GenerationResult, BackendError>
{
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
        return protocol("response has no choices");
    auto const& choice = body["choices"][0];
    if (!choice.is_object() || !choice.contains("message") || !choice["message"].is_object())
        return protocol("first choice has no message");
    auto const& content = choice["message"].value("content", nlohmann::json());
    if (!content.is_string())
        return protocol("message content is not a string");
    auto const finish = choice.value("finish_reason", nlohmann::json());
    if (!finish.is_string())
        return protocol("finish_reason missing");

    // Servers may ignore `stop`; truncate locally either way.
    auto result = apply_stop_sequences(content.get<std::string>(), request.stop_sequences);
    if (result.stop_reason == StopReason::StopSequence)
        return result;

    auto const reason = finish.get<std::string>();
    if (reason == "length")
        result.stop_reason = StopReason::LengthLimit;
    else if (reason == "stop")
    {
        auto const& stops = request.stop_sequences;
        auto const matched = choice.value("stop_reason", nlohmann::json());
        if (matched.is_string() && std::find(stops.begin(), stops.end(), matched.get<std::string>()) != stops.end())
        {
            result.stop_reason = StopReason::StopSequence;
            result.matched_stop = matched.get<std::string>();
        }
        else if (!stops.empty() && !matched.is_number_integer())
        {
            // OpenAI reports a stop-sequence hit as plain "stop" without
            // saying which one.
            result.stop_reason = StopReason::StopSequence;
            result.matched_stop = stops.front();
        }
        else
            result.stop_reason = StopReason::EndOfMessage;
    }
    else if (reason == "eos" || reason == "end_turn")
        result.stop_reason = StopReason::EndOfMessage;
    else
        return protocol("unknown finish_reason '" + reason + "'");
    return result;
}

TokenBucket::TokenBucket(double rate, double capacity)
    : _rate(rate), _capacity(std::max(1.0, capacity)), _tokens(_capacity), _last(std::chrono::steady_clock::now())
{
}

void TokenBucket::acquire()
{
    if (_rate <= 0.0)
        return;
    auto lock = std::unique_lock(_mutex);
    for (;;)
    {
        auto const now = std::chrono::steady_clock::now();
        auto const elapsed = std::chrono::duration<double>(now - _last).count();
        _tokens = std::min(_capacity, _tokens + elapsed * _rate);
        _last = now;
        if (_tokens >= 1.0)
        {
            _tokens -= 1.0;
            return;
        }
        auto const wait = std::chrono::duration<double>((1.0 - _tokens) / _rate);
        lock.unlock();
        std::this_thread::sleep_for(wait);
        lock.lock();
    }
}

RemoteBackend::RemoteBackend(std::string id, RemoteConfig config)
    : _id(std::move(id)),
      _config(std::move(config)),
      _bucket(_config.requests_per_second, _config.burst),
      _sleep([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })
{
    if (_config.base_url.empty())
        if (auto const* env = std::getenv("TIM_API_BASE"))
            _config.base_url = env;
    if (auto parts = split_base_url(_config.base_url))
    {
        _origin = parts->first;
        _path = parts->second + "/chat/completions";
    }
    if (!_config.api_key_env.empty())
        if (auto const* key = std::getenv(_config.api_key_env.c_str()))
            _api_key = key;
    _config.max_in_flight = std::max<std::size_t>(_config.max_in_flight, 1);
}

auto RemoteBackend::attempt(const std::string& body) -> Expected<nlohmann::json, BackendError>
{
    auto client = httplib::Client(_origin);
    auto const seconds = std::chrono::duration_cast<std::chrono::seconds>(_config.timeout).count();
    auto const micros = std::chrono::duration_cast<std::chrono::microseconds>(_config.timeout).count() % 1'000'000;
    client.set_connection_timeout(seconds, micros);
    client.set_read_timeout(seconds, micros);
    client.set_write_timeout(seconds, micros);

    auto headers = httplib::Headers {};
    if (!_api_key.empty())
        headers.emplace("Authorization", "Bearer " + _api_key);

    auto res = client.Post(_path, headers, body, "application/json");
    if (!res)
    {
        auto const err = res.error();
        auto const kind = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read
                              ? BackendErrorKind::Timeout
                              : BackendErrorKind::Network;
        return unexpected(BackendError { .kind = kind, .message = httplib::to_string(err) });
    }
    auto const status = res->status;
    if (status == 401 || status == 403)
        return unexpected(BackendError { .kind = BackendErrorKind::Auth, .status = status, .message = excerpt(res->body) });
    if (status == 429)
        return unexpected(BackendError { .kind = BackendErrorKind::RateLimited,
                                         .status = status,
                                         .message = excerpt(res->body),
                                         .retry_after = retry_after(*res) });
    if (status >= 500)
        return unexpected(BackendError { .kind = BackendErrorKind::Network,
                                         .status = status,
                                         .message = excerpt(res->body),
                                         .retry_after = retry_after(*res) });
    if (status < 200 || status >= 300)
        return unexpected(BackendError {
            .kind = BackendErrorKind::InvalidRequest, .status = status, .message = excerpt(res->body) });

    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (parsed.is_discarded())
        return protocol("response body is not JSON: " + excerpt(res->body));
    return parsed;
}

auto RemoteBackend::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    if (auto invalid = validate_request(request))
        return unexpected(*invalid);
    if (_origin.empty())
        return unexpected(BackendError { .kind = BackendErrorKind::InvalidRequest,
                                         .message = "no usable base URL (set base_url or TIM_API_BASE)" });
    auto body = to_wire_body(request, _config);
    if (!body)
        return unexpected(BackendError { .kind = BackendErrorKind::InvalidRequest, .message = body.error() });
    auto const payload = body->dump();

    {
        auto lock = std::unique_lock(_slots_mutex);
        _slots_cv.wait(lock, [&] { return _in_flight < _config.max_in_flight; });
        ++_in_flight;
    }
    struct Release
    {
        RemoteBackend* self;
        ~Release()
        {
            {
                auto lock = std::lock_guard(self->_slots_mutex);
                --self->_in_flight;
            }
            self->_slots_cv.notify_one();
        }
    } release { this };

    auto delay = _config.initial_backoff;
    auto last = BackendError {};
    for (auto n = 1; n <= std::max(_config.max_attempts, 1); ++n)
    {
        _bucket.acquire();
        auto response = attempt(payload);
        if (response)
            return parse_completion(*response, request);
        last = response.error();
        if (!transient(last) || n == _config.max_attempts)
            break;
        auto wait = std::min(delay, _config.max_backoff);
        if (last.retry_after)
            wait = std::max(wait, *last.retry_after);
        _sleep(wait);
        delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * _config.backoff_multiplier));
    }
    return unexpected(last);
}

} // namespace tim
