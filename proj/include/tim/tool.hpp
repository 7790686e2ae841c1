// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/backend.hpp>
#include <tim/expected.hpp>
#include <tim/image.hpp>

#include <chrono>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tim
{

struct ToolArgument
{
    std::string name;
    std::string type; // as shown to the verifier, e.g. "Integer", "List[String]"
    std::string description;
};

struct ToolDefinition
{
    std::string name;
    std::string description;
    std::vector<ToolArgument> arguments;
    std::string example_usage;
};

inline constexpr auto AskQuestionsToolName = std::string_view { "ask_questions" };

auto ask_questions_tool() -> ToolDefinition;

/// The shipped tool registry: exactly one tool, ask_questions.
auto default_tool_registry() -> std::vector<ToolDefinition>;

struct AskQuestionsCall
{
    int target_image = 1; // 1-based
    std::vector<std::string> questions;

    auto operator==(const AskQuestionsCall&) const -> bool = default;
};

enum class ToolCallParseErrorKind
{
    MalformedPayload,
    UnknownTool,
    MissingArgument,
    BadArgumentType,
    EmptyQuestions,
};

auto to_string(ToolCallParseErrorKind kind) -> std::string_view;

struct ToolCallParseError
{
    ToolCallParseErrorKind kind;
    std::string detail;
};

/// Total over arbitrary text: every input yields a call or a classified error.
auto parse_tool_call(std::string_view raw) -> Expected<AskQuestionsCall, ToolCallParseError>;

/// Canonical payload, `{"name": "ask_questions", "arguments": {...}}`.
auto render_tool_call(const AskQuestionsCall& call) -> std::string;

struct ToolOutcome
{
    std::string answers;
    std::string answered_by;
};

enum class ToolExecErrorKind
{
    ImageIndexOutOfRange,
    BackendFailure,
    Timeout,
};

auto to_string(ToolExecErrorKind kind) -> std::string_view;

struct ToolExecError
{
    ToolExecErrorKind kind;
    std::string cause;
};

/// Versioned, fixed instruction given to every answerer.
inline constexpr auto AnswererInstructionVersion = std::string_view { "answerer-v1" };
auto answerer_instruction() -> std::string_view;

struct ToolExecOptions
{
    std::chrono::milliseconds timeout { std::chrono::seconds(120) };
};

/// The request an answerer receives: the fixed instruction, the single
/// target image and the numbered questions. Nothing else.
auto build_answerer_request(const AskQuestionsCall& call, const ImageRef& image, const ToolExecOptions& options = {})
    -> GenerationRequest;

/// Recovers the numbered questions from an answerer request.
auto answerer_questions(const GenerationRequest& request) -> std::vector<std::string>;

auto execute_ask_questions(const AskQuestionsCall& call, std::span<const ImageRef> images, Backend& answerer,
                           const ToolExecOptions& options = {}) -> Expected<ToolOutcome, ToolExecError>;

/// Body injected between <tool> and </tool>; the answer verbatim.
auto format_tool_response(const ToolOutcome& outcome) -> std::string;

inline constexpr auto DefaultLeakMinLength = std::size_t { 12 };

/// First substring of length `min_length` shared between `serialized` and
/// any of `forbidden`, if one exists.
auto find_context_leak(std::string_view serialized, std::span<const std::string> forbidden,
                       std::size_t min_length = DefaultLeakMinLength) -> std::optional<std::string>;

} // namespace tim
