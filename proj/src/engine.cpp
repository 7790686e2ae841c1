// SPDX-License-Identifier: Apache-2.0
#include <tim/engine.hpp>
#include <tim/text.hpp>

#include <cctype>
#include <map>

namespace tim
{

namespace
{

constexpr auto RoleText = std::string_view {
    "You are a math teacher. Your task is to review and critique the paragraphs in solution step by step."
};
constexpr auto ToolsText = std::string_view { " You have access to tools to help you gather information. Use them when necessary." };
constexpr auto ModelPlaceholder = std::string_view { "<model_name>" };

constexpr auto WorkflowText = std::string_view {
    "Your task is to verify the correctness of each paragraph in the solution. Split your verification by "
    "`### Paragraph {ID}`.\n"
    "\n"
    "For each paragraph, you must follow this workflow:\n"
    "1. Start with an `<planning>` part. In this part, you should analyze whether and how tools should be called to "
    "verify the visual correctness, knowledge correctness, and logic soundness of the paragraph.\n"
    "2. Based on your planning, you can either call a tool (Step 3) or move directly to analysis (Step 4).\n"
    "3. (Optional) To call a tool, output a `<tool_call>JSON_BLOB</tool_call>` section with the JSON for the tool you "
    "want to use. This will invoke the corresponding tool and return a tool response.\n"
    "4. (Mandatory) Now you have to first provide a `<analyze>` section to provide the rationale of your verification "
    "based on the tool response (if any). Then, you MUST conclude by providing a `<verify>` part with your overall "
    "judgement."
};

auto tool_section(const std::vector<ToolDefinition>& tools, std::string_view answerer_name) -> std::string
{
    auto out = std::string("[Available Tools]\n");
    for (auto const& tool: tools)
    {
        auto description = tool.description;
        if (auto pos = description.find(ModelPlaceholder); pos != std::string::npos)
            description.replace(pos, ModelPlaceholder.size(), answerer_name);
        out += "\nFunction: " + tool.name + "\n";
        out += "Description: " + description + "\n";
        out += "Arguments:\n";
        for (auto const& arg: tool.arguments)
            out += "- " + arg.name + ": (" + arg.type + ") " + arg.description + "\n";
        if (!tool.example_usage.empty())
            out += "Example Usage:\n" + tool.example_usage + "\n";
    }
    return out;
}

auto paragraph_open(std::size_t i) -> std::string
{
    return "<paragraph_" + std::to_string(i) + ">";
}

auto paragraph_close(std::size_t i) -> std::string
{
    return "</paragraph_" + std::to_string(i) + ">";
}

// Id of the last `### Paragraph N` header in the transcript, 0 if none.
auto current_paragraph(std::string_view transcript) -> int
{
    constexpr auto Header = std::string_view { "### Paragraph " };
    auto pos = transcript.rfind(Header);
    while (pos != std::string_view::npos)
    {
        auto const digits = transcript.substr(pos + Header.size());
        auto const values = text::extract_integers(digits.substr(0, digits.find('\n')));
        if (!values.empty() && !digits.empty() && std::isdigit(static_cast<unsigned char>(digits.front())))
            return static_cast<int>(values.front());
        if (pos == 0)
            break;
        pos = transcript.rfind(Header, pos - 1);
    }
    return 0;
}

// Body of a <tool_call> opened but not yet closed at the end of the transcript.
auto pending_tool_call(std::string_view transcript) -> std::optional<std::string_view>
{
    auto const opener = open_tag(SegmentKind::ToolCall);
    auto const open = transcript.rfind(opener);
    if (open == std::string_view::npos)
        return std::nullopt;
    auto const close = transcript.rfind(close_tag(SegmentKind::ToolCall));
    if (close != std::string_view::npos && close > open)
        return std::nullopt;
    return transcript.substr(open + opener.size());
}

auto engine_error(EngineErrorKind kind, std::string message, std::string transcript) -> EngineError
{
    return EngineError { .kind = kind, .message = std::move(message), .transcript = std::move(transcript) };
}

} // namespace

auto validate_problem(const Problem& problem, bool allow_text_only) -> std::string
{
    if (problem.steps.empty())
        return "problem '" + problem.id + "' has no steps";
    if (problem.images.empty() && !allow_text_only)
        return "problem '" + problem.id + "' has no images (text-only problems need --allow-text-only)";
    return {};
}

auto build_prompt(const Problem& problem, const std::vector<ToolDefinition>& tools, std::string_view answerer_name)
    -> GenerationRequest
{
    auto system = std::string(RoleText);
    if (!tools.empty())
        system += std::string(ToolsText) + "\n\n" + tool_section(tools, answerer_name);

    auto user = std::string("The following is the multi-modal math problem and a solution (split into paragraphs).\n\n");
    user += "[Math Problem]\n\n" + problem.question + "\n\n[Solution]\n\n";
    for (auto i = std::size_t { 0 }; i < problem.steps.size(); ++i)
        user += paragraph_open(i + 1) + "\n" + problem.steps[i] + "\n" + paragraph_close(i + 1) + "\n\n";
    user += WorkflowText;

    auto request = GenerationRequest {};
    request.messages.push_back({ Role::System, std::move(system), {} });
    request.messages.push_back({ Role::User, std::move(user), problem.images });
    request.stop_sequences = { std::string(ToolCallStop) };
    request.temperature = 0.0;
    return request;
}

auto prompt_steps(const GenerationRequest& request) -> std::vector<std::string>
{
    auto steps = std::vector<std::string> {};
    for (auto const& m: request.messages)
    {
        if (m.role != Role::User)
            continue;
        auto const body = std::string_view(m.text);
        for (auto i = std::size_t { 1 };; ++i)
        {
            auto const open = paragraph_open(i);
            auto const begin = body.find(open);
            if (begin == std::string_view::npos)
                break;
            auto const end = body.find(paragraph_close(i), begin);
            if (end == std::string_view::npos)
                break;
            steps.emplace_back(text::trim(body.substr(begin + open.size(), end - begin - open.size())));
        }
        if (!steps.empty())
            break;
    }
    return steps;
}

auto to_string(EngineErrorKind kind) -> std::string_view
{
    switch (kind)
    {
        case EngineErrorKind::FormatInvalid: return "format_invalid";
        case EngineErrorKind::BudgetExceeded: return "budget_exceeded";
        case EngineErrorKind::BackendError: return "backend_error";
        case EngineErrorKind::InvalidProblem: return "invalid_problem";
    }
    return "format_invalid";
}

auto verify_solution(const Problem& problem, Backend& verifier, Backend& answerer, const EngineLimits& limits)
    -> Expected<VerificationRun, EngineError>
{
    if (auto problemError = validate_problem(problem, limits.allow_text_only); !problemError.empty())
        return unexpected(engine_error(EngineErrorKind::InvalidProblem, problemError, {}));

    auto const stepCount = problem.steps.size();
    auto const maxGenerations =
        limits.max_total_generations.value_or(2 + limits.max_tool_calls_per_paragraph * stepCount);
    auto const prompt = build_prompt(problem, default_tool_registry(), limits.answerer_name.value_or(answerer.id()));

    auto transcript = std::string {};
    auto callsByParagraph = std::map<int, std::size_t> {};
    auto generations = std::size_t { 0 };
    auto finished = false;

    while (!finished)
    {
        if (generations >= maxGenerations)
            return unexpected(engine_error(EngineErrorKind::BudgetExceeded,
                                           "no end of message within " + std::to_string(maxGenerations) + " generations",
                                           transcript));

        auto request = prompt;
        if (!transcript.empty())
            request.messages.push_back({ Role::Assistant, transcript, {} });

        auto result = verifier.generate(request);
        ++generations;
        if (!result)
            return unexpected(engine_error(EngineErrorKind::BackendError, result.error().describe(), transcript));

        transcript += result->text;

        // A remote "stop" finish with no open <tool_call> is an ordinary end.
        auto const pending = result->stop_reason == StopReason::StopSequence && result->matched_stop == ToolCallStop
                                 ? pending_tool_call(transcript)
                                 : std::nullopt;
        if (!pending)
        {
            finished = true;
            continue;
        }

        auto const paragraph = current_paragraph(transcript);
        if (++callsByParagraph[paragraph] > limits.max_tool_calls_per_paragraph)
            return unexpected(engine_error(EngineErrorKind::BudgetExceeded,
                                           "paragraph " + std::to_string(paragraph) + " exceeded "
                                               + std::to_string(limits.max_tool_calls_per_paragraph) + " tool calls",
                                           transcript));

        auto response = std::string {};
        if (auto call = parse_tool_call(*pending); !call)
            response = "TOOL ERROR: " + std::string(to_string(call.error().kind)) + ": " + call.error().detail;
        else if (auto outcome = execute_ask_questions(*call, problem.images, answerer, limits.tool); !outcome)
            response = "TOOL ERROR: " + std::string(to_string(outcome.error().kind)) + ": " + outcome.error().cause;
        else
            response = format_tool_response(*outcome);

        transcript += std::string(ToolCallStop) + open_tag(SegmentKind::ToolResponse) + response
                      + close_tag(SegmentKind::ToolResponse);
    }

    auto scan = scan_trajectory(transcript);
    auto trajectory = Trajectory { std::move(scan.paragraphs) };
    auto violations = std::move(scan.errors);
    for (auto& v: validate_format(trajectory, stepCount))
        if (violations.empty() || v.kind == FormatErrorKind::ParagraphCountMismatch)
            violations.push_back(std::move(v));

    if (!violations.empty())
    {
        auto error = engine_error(EngineErrorKind::FormatInvalid,
                                  std::string(to_string(violations.front().kind)) + ": " + violations.front().detail,
                                  std::move(transcript));
        error.violations = std::move(violations);
        error.partial_verdicts.assign(stepCount, std::nullopt);
        error.tool_calls.assign(stepCount, 0);
        for (auto const& p: trajectory.paragraphs)
            if (p.paragraph_id >= 1 && static_cast<std::size_t>(p.paragraph_id) <= stepCount)
            {
                error.partial_verdicts[static_cast<std::size_t>(p.paragraph_id) - 1] = p.verdict;
                error.tool_calls[static_cast<std::size_t>(p.paragraph_id) - 1] = p.tool_call_count();
            }
        return unexpected(std::move(error));
    }

    auto run = VerificationRun { .problem_id = problem.id, .trajectory = std::move(trajectory) };
    run.verdicts = run.trajectory.verdicts();
    for (auto const& p: run.trajectory.paragraphs)
        run.tool_calls.push_back(p.tool_call_count());
    run.transcript = std::move(transcript);
    run.generations = generations;
    return run;
}

auto extract_step_labels(const VerificationRun& run) -> std::vector<Verdict>
{
    return run.verdicts;
}

auto labels_for_scoring(const EngineError& error, std::size_t step_count) -> std::vector<Verdict>
{
    auto labels = std::vector<Verdict>(step_count, Verdict::Correct);
    for (auto i = std::size_t { 0 }; i < step_count && i < error.partial_verdicts.size(); ++i)
        if (error.partial_verdicts[i])
            labels[i] = *error.partial_verdicts[i];
    return labels;
}

} // namespace tim
