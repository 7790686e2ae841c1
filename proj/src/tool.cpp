// SPDX-License-Identifier: Apache-2.0
#include <tim/text.hpp>
#include <tim/tool.hpp>

#include <climits>
#include <unordered_set>

namespace tim
{

namespace
{

constexpr auto AnswererInstruction = std::string_view {
    "You answer questions about the attached image. Rely only on what the image shows. "
    "Answer every numbered question in order, one numbered line per answer. "
    "If the image does not show what a question asks for, answer INSUFFICIENT INFORMATION for that question."
};

constexpr auto QuestionsHeader = std::string_view { "Questions:" };

auto parse_error(ToolCallParseErrorKind kind, std::string detail) -> Unexpected<ToolCallParseError>
{
    return unexpected(ToolCallParseError { kind, std::move(detail) });
}

} // namespace

auto ask_questions_tool() -> ToolDefinition
{
    return ToolDefinition {
        .name = std::string(AskQuestionsToolName),
        .description = "Asks one or more questions about a specific image to gather more information. Use it when "
                       "you are unsure about what you see and need confirmation. The model '<model_name>' will be "
                       "used to answer.",
        .arguments = {
            { "target_image", "Integer", "The 1-based index of the image." },
            { "questions", "List[String]", "A list of questions to ask." },
        },
        .example_usage = R"(<tool_call>{"name": "ask_questions", "arguments": {"target_image": 1, "questions": ["Question 1?", "Question 2?"]}}</tool_call>)",
    };
}

auto default_tool_registry() -> std::vector<ToolDefinition>
{
    return { ask_questions_tool() };
}

auto to_string(ToolCallParseErrorKind kind) -> std::string_view
{
    switch (kind)
    {
        case ToolCallParseErrorKind::MalformedPayload: return "malformed_payload";
        case ToolCallParseErrorKind::UnknownTool: return "unknown_tool";
        case ToolCallParseErrorKind::MissingArgument: return "missing_argument";
        case ToolCallParseErrorKind::BadArgumentType: return "bad_argument_type";
        case ToolCallParseErrorKind::EmptyQuestions: return "empty_questions";
    }
    return "malformed_payload";
}

auto to_string(ToolExecErrorKind kind) -> std::string_view
{
    switch (kind)
    {
        case ToolExecErrorKind::ImageIndexOutOfRange: return "image_index_out_of_range";
        case ToolExecErrorKind::BackendFailure: return "backend_failure";
        case ToolExecErrorKind::Timeout: return "timeout";
    }
    return "backend_failure";
}

auto parse_tool_call(std::string_view raw) -> Expected<AskQuestionsCall, ToolCallParseError>
{
    using Kind = ToolCallParseErrorKind;

    auto const payload = nlohmann::json::parse(text::trim(raw), nullptr, false);
    if (payload.is_discarded())
        return parse_error(Kind::MalformedPayload, "not valid JSON");
    if (!payload.is_object())
        return parse_error(Kind::MalformedPayload, "payload must be a single JSON object");

    auto const name = payload.find("name");
    if (name == payload.end() || !name->is_string())
        return parse_error(Kind::MalformedPayload, "missing string field 'name'");
    if (name->get<std::string>() != AskQuestionsToolName)
        return parse_error(Kind::UnknownTool, "unknown tool '" + name->get<std::string>() + "'");

    auto const args = payload.find("arguments");
    if (args == payload.end())
        return parse_error(Kind::MissingArgument, "missing 'arguments'");
    if (!args->is_object())
        return parse_error(Kind::BadArgumentType, "'arguments' must be an object");

    auto call = AskQuestionsCall {};

    auto const image = args->find("target_image");
    if (image == args->end())
        return parse_error(Kind::MissingArgument, "missing 'target_image'");
    if (!image->is_number_integer())
        return parse_error(Kind::BadArgumentType, "'target_image' must be an integer");
    if (image->is_number_unsigned() ? image->get<unsigned long long>() > INT_MAX
                                    : (image->get<long long>() < 1 || image->get<long long>() > INT_MAX))
        return parse_error(Kind::BadArgumentType, "'target_image' must be a 1-based index");
    call.target_image = image->get<int>();
    if (call.target_image < 1)
        return parse_error(Kind::BadArgumentType, "'target_image' must be a 1-based index");

    auto const questions = args->find("questions");
    if (questions == args->end())
        return parse_error(Kind::MissingArgument, "missing 'questions'");
    if (!questions->is_array())
        return parse_error(Kind::BadArgumentType, "'questions' must be a list of strings");
    if (questions->empty())
        return parse_error(Kind::EmptyQuestions, "'questions' is empty");
    for (auto const& q: *questions)
    {
        if (!q.is_string())
            return parse_error(Kind::BadArgumentType, "'questions' must be a list of strings");
        auto const trimmed = text::trim(q.get_ref<const std::string&>());
        if (trimmed.empty())
            return parse_error(Kind::EmptyQuestions, "blank question");
        call.questions.emplace_back(trimmed);
    }
    return call;
}

auto render_tool_call(const AskQuestionsCall& call) -> std::string
{
    auto out = std::string(R"({"name": "ask_questions", "arguments": {"target_image": )") + std::to_string(call.target_image)
               + R"(, "questions": [)";
    for (auto i = std::size_t { 0 }; i < call.questions.size(); ++i)
    {
        if (i > 0)
            out += ", ";
        out += nlohmann::json(call.questions[i]).dump();
    }
    return out + "]}}";
}

auto answerer_instruction() -> std::string_view
{
    return AnswererInstruction;
}

auto build_answerer_request(const AskQuestionsCall& call, const ImageRef& image, const ToolExecOptions& options)
    -> GenerationRequest
{
    auto body = std::string(QuestionsHeader);
    for (auto i = std::size_t { 0 }; i < call.questions.size(); ++i)
        body += "\n" + std::to_string(i + 1) + ". " + call.questions[i];

    auto request = GenerationRequest {};
    request.messages.push_back({ Role::System, std::string(AnswererInstruction), {} });
    request.messages.push_back({ Role::User, std::move(body), { image } });
    request.max_tokens = 1024;
    request.temperature = 0.0;
    request.timeout = options.timeout;
    return request;
}

auto answerer_questions(const GenerationRequest& request) -> std::vector<std::string>
{
    auto questions = std::vector<std::string> {};
    for (auto const& m: request.messages)
    {
        if (m.role != Role::User || !text::starts_with(m.text, QuestionsHeader))
            continue;
        auto const body = std::string_view(m.text).substr(QuestionsHeader.size());
        auto begin = std::size_t { 0 };
        while (begin <= body.size())
        {
            auto end = body.find('\n', begin);
            if (end == std::string_view::npos)
                end = body.size();
            auto const line = body.substr(begin, end - begin);
            auto const dot = line.find(". ");
            if (dot != std::string_view::npos && dot > 0
                && line.substr(0, dot).find_first_not_of("0123456789") == std::string_view::npos)
                questions.emplace_back(line.substr(dot + 2));
            begin = end + 1;
        }
    }
    return questions;
}

auto execute_ask_questions(const AskQuestionsCall& call, std::span<const ImageRef> images, Backend& answerer,
                           const ToolExecOptions& options) -> Expected<ToolOutcome, ToolExecError>
{
    if (call.target_image < 1 || static_cast<std::size_t>(call.target_image) > images.size())
        return unexpected(ToolExecError { ToolExecErrorKind::ImageIndexOutOfRange,
                                          "target_image " + std::to_string(call.target_image) + " but the problem has "
                                              + std::to_string(images.size()) + " image(s)" });

    auto const request = build_answerer_request(call, images[static_cast<std::size_t>(call.target_image) - 1], options);
    auto result = answerer.generate(request);
    if (!result)
    {
        auto const kind = result.error().kind == BackendErrorKind::Timeout ? ToolExecErrorKind::Timeout
                                                                           : ToolExecErrorKind::BackendFailure;
        return unexpected(ToolExecError { kind, result.error().describe() });
    }
    if (text::trim(result->text).empty())
        return unexpected(ToolExecError { ToolExecErrorKind::BackendFailure, "answerer returned an empty answer" });
    return ToolOutcome { std::move(result->text), answerer.id() };
}

auto format_tool_response(const ToolOutcome& outcome) -> std::string
{
    return outcome.answers;
}

auto find_context_leak(std::string_view serialized, std::span<const std::string> forbidden, std::size_t min_length)
    -> std::optional<std::string>
{
    if (min_length == 0 || serialized.size() < min_length)
        return std::nullopt;
    auto windows = std::unordered_set<std::string_view> {};
    windows.reserve(serialized.size());
    for (auto i = std::size_t { 0 }; i + min_length <= serialized.size(); ++i)
        windows.insert(serialized.substr(i, min_length));

    for (auto const& text: forbidden)
    {
        auto const view = std::string_view(text);
        for (auto i = std::size_t { 0 }; i + min_length <= view.size(); ++i)
            if (windows.contains(view.substr(i, min_length)))
                return std::string(view.substr(i, min_length));
    }
    return std::nullopt;
}

} // namespace tim
