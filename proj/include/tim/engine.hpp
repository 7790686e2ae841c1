// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/backend.hpp>
#include <tim/expected.hpp>
#include <tim/image.hpp>
#include <tim/tool.hpp>
#include <tim/trajectory.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace tim
{

struct Problem
{
    std::string id;
    std::string question;
    std::vector<ImageRef> images;
    std::vector<std::string> steps;
};

/// Empty when valid. Text-only problems are rejected unless allowed.
auto validate_problem(const Problem& problem, bool allow_text_only = false) -> std::string;

inline constexpr auto ToolCallStop = std::string_view { "</tool_call>" };

/// Verification prompt: system message with the role text and tool
/// documentation, user message with the problem, the steps wrapped as
/// <paragraph_i> blocks and the per-paragraph workflow.
auto build_prompt(const Problem& problem, const std::vector<ToolDefinition>& tools, std::string_view answerer_name)
    -> GenerationRequest;

/// Step texts recovered from a verification prompt's <paragraph_i> blocks.
auto prompt_steps(const GenerationRequest& request) -> std::vector<std::string>;

struct EngineLimits
{
    std::size_t max_tool_calls_per_paragraph = 3;
    /// Defaults to 2 + max_tool_calls_per_paragraph * step count.
    std::optional<std::size_t> max_total_generations;
    ToolExecOptions tool;
    bool allow_text_only = false;
    /// Substituted into the tool description; defaults to the answerer id.
    std::optional<std::string> answerer_name;
};

struct VerificationRun
{
    std::string problem_id;
    Trajectory trajectory;
    std::vector<Verdict> verdicts;
    std::vector<std::size_t> tool_calls; // per paragraph
    std::string transcript;
    std::size_t generations = 0;
};

enum class EngineErrorKind
{
    FormatInvalid,
    BudgetExceeded,
    BackendError,
    InvalidProblem,
};

auto to_string(EngineErrorKind kind) -> std::string_view;

struct EngineError
{
    EngineErrorKind kind;
    std::string message;
    std::vector<FormatError> violations;
    /// Verdicts for paragraphs that did parse, by step; nullopt elsewhere.
    std::vector<std::optional<Verdict>> partial_verdicts;
    std::vector<std::size_t> tool_calls;
    std::string transcript;
};

/// Runs generate / pause at </tool_call> / execute / resume until the
/// verifier ends its message, then extracts per-step verdicts.
auto verify_solution(const Problem& problem, Backend& verifier, Backend& answerer, const EngineLimits& limits = {})
    -> Expected<VerificationRun, EngineError>;

auto extract_step_labels(const VerificationRun& run) -> std::vector<Verdict>;

/// Labels used for scoring a failed run: unparsed steps count as Correct.
auto labels_for_scoring(const EngineError& error, std::size_t step_count) -> std::vector<Verdict>;

} // namespace tim
