// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/expected.hpp>
#include <tim/image.hpp>

#include <json.hpp>

#include <chrono>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tim
{

enum class Role
{
    System,
    User,
    Assistant,
    Tool,
};

auto to_string(Role role) -> std::string_view;

struct Message
{
    Role role = Role::User;
    std::string text;
    std::vector<ImageRef> images;
};

struct GenerationRequest
{
    std::vector<Message> messages;
    std::vector<std::string> stop_sequences;
    int max_tokens = 4096;
    double temperature = 0.0;
    /// Per-request deadline; backends that can block honour it.
    std::optional<std::chrono::milliseconds> timeout;
};

enum class StopReason
{
    StopSequence,
    EndOfMessage,
    LengthLimit,
};

auto to_string(StopReason reason) -> std::string_view;

struct GenerationResult
{
    /// Generated text, never including the matched stop sequence.
    std::string text;
    StopReason stop_reason = StopReason::EndOfMessage;
    std::string matched_stop;
};

enum class BackendErrorKind
{
    Network,
    Auth,
    RateLimited,
    ProtocolViolation,
    Timeout,
    InvalidRequest,
};

auto to_string(BackendErrorKind kind) -> std::string_view;

struct BackendError
{
    BackendErrorKind kind = BackendErrorKind::Network;
    int status = 0;
    std::string message;
    std::optional<std::chrono::milliseconds> retry_after;

    [[nodiscard]] auto describe() const -> std::string;
};

/// Text generation over images and messages. Any backend can fill any role
/// (teacher, verifier policy, tool answerer); the engine picks by
/// configuration.
class Backend
{
  public:
    virtual ~Backend() = default;

    [[nodiscard]] virtual auto id() const -> std::string = 0;

    /// Concurrent requests the backend tolerates.
    [[nodiscard]] virtual auto max_in_flight() const -> std::size_t { return std::numeric_limits<std::size_t>::max(); }

    virtual auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> = 0;
};

/// Empty when the request satisfies its invariants.
auto validate_request(const GenerationRequest& request) -> std::optional<BackendError>;

/// Truncates `text` at the earliest stop sequence occurrence (ties go to
/// the first listed sequence).
auto apply_stop_sequences(std::string_view text, std::span<const std::string> stops) -> GenerationResult;

/// Canonical serialization of messages and stop sequences, images by
/// content digest. Stable across runs.
auto canonical_request_json(const GenerationRequest& request) -> nlohmann::json;
auto request_hash(const GenerationRequest& request) -> std::string;

/// Trailing assistant message content, the partial transcript being
/// continued; empty when the last message is not from the assistant.
auto assistant_prefix(const GenerationRequest& request) -> std::string_view;

} // namespace tim
