// SPDX-License-Identifier: Apache-2.0
#include <tim/backend.hpp>

namespace tim
{

auto to_string(Role role) -> std::string_view
{
    switch (role)
    {
        case Role::System: return "system";
        case Role::User: return "user";
        case Role::Assistant: return "assistant";
        case Role::Tool: return "tool";
    }
    return "user";
}

auto to_string(StopReason reason) -> std::string_view
{
    switch (reason)
    {
        case StopReason::StopSequence: return "stop_sequence";
        case StopReason::EndOfMessage: return "end_of_message";
        case StopReason::LengthLimit: return "length_limit";
    }
    return "end_of_message";
}

auto to_string(BackendErrorKind kind) -> std::string_view
{
    switch (kind)
    {
        case BackendErrorKind::Network: return "network";
        case BackendErrorKind::Auth: return "auth";
        case BackendErrorKind::RateLimited: return "rate_limited";
        case BackendErrorKind::ProtocolViolation: return "protocol_violation";
        case BackendErrorKind::Timeout: return "timeout";
        case BackendErrorKind::InvalidRequest: return "invalid_request";
    }
    return "network";
}

auto BackendError::describe() const -> std::string
{
    auto out = std::string(to_string(kind));
    if (status != 0)
        out += " (status " + std::to_string(status) + ")";
    if (retry_after)
        out += " (retry after " + std::to_string(retry_after->count()) + " ms)";
    if (!message.empty())
        out += ": " + message;
    return out;
}

auto validate_request(const GenerationRequest& request) -> std::optional<BackendError>
{
    auto const invalid = [](std::string what) {
        return BackendError { .kind = BackendErrorKind::InvalidRequest, .message = std::move(what) };
    };
    if (request.messages.empty())
        return invalid("request has no messages");
    for (auto const& s: request.stop_sequences)
        if (s.empty())
            return invalid("empty stop sequence");
    if (request.max_tokens <= 0)
        return invalid("max_tokens must be positive");
    if (!(request.temperature >= 0.0))
        return invalid("temperature must be non-negative");
    return std::nullopt;
}

auto apply_stop_sequences(std::string_view text, std::span<const std::string> stops) -> GenerationResult
{
    auto best = std::string_view::npos;
    auto const* matched = static_cast<const std::string*>(nullptr);
    for (auto const& stop: stops)
    {
        if (stop.empty())
            continue;
        auto const pos = text.find(stop);
        if (pos < best)
        {
            best = pos;
            matched = &stop;
        }
    }
    if (!matched)
        return GenerationResult { std::string(text), StopReason::EndOfMessage, {} };
    return GenerationResult { std::string(text.substr(0, best)), StopReason::StopSequence, *matched };
}

auto canonical_request_json(const GenerationRequest& request) -> nlohmann::json
{
    auto messages = nlohmann::json::array();
    for (auto const& m: request.messages)
    {
        auto images = nlohmann::json::array();
        for (auto const& img: m.images)
            images.push_back(content_digest(img));
        messages.push_back({ { "role", to_string(m.role) }, { "text", m.text }, { "images", images } });
    }
    return { { "messages", messages }, { "stop", request.stop_sequences } };
}

auto request_hash(const GenerationRequest& request) -> std::string
{
    return crypto::sha256_hex(canonical_request_json(request).dump());
}

auto assistant_prefix(const GenerationRequest& request) -> std::string_view
{
    if (request.messages.empty() || request.messages.back().role != Role::Assistant)
        return {};
    return request.messages.back().text;
}

} // namespace tim
