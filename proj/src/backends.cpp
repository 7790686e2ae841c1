// SPDX-License-Identifier: Apache-2.0
#include <tim/backends.hpp>
#include <tim/engine.hpp>
#include <tim/text.hpp>
#include <tim/tool.hpp>

#include <cctype>
#include <fstream>
#include <numeric>

namespace tim
{

namespace
{

auto protocol_error(std::string what) -> Unexpected<BackendError>
{
    return unexpected(BackendError { .kind = BackendErrorKind::ProtocolViolation, .message = std::move(what) });
}

auto is_word_char(char c) -> bool
{
    return std::isalnum(static_cast<unsigned char>(c)) != 0;
}

// Whole-word, case-insensitive containment; `lowered` is already lowercase.
auto mentions(std::string_view lowered, std::string_view name) -> bool
{
    auto const needle = text::to_lower(name);
    if (needle.empty())
        return false;
    for (auto pos = lowered.find(needle); pos != std::string_view::npos; pos = lowered.find(needle, pos + 1))
    {
        auto const before = pos == 0 || !is_word_char(lowered[pos - 1]);
        auto const end = pos + needle.size();
        auto const after = end >= lowered.size() || !is_word_char(lowered[end]);
        if (before && after)
            return true;
    }
    return false;
}

auto mentioned_indices(std::string_view lowered, const std::vector<std::string>& names) -> std::vector<std::size_t>
{
    auto out = std::vector<std::size_t> {};
    for (auto i = std::size_t { 0 }; i < names.size(); ++i)
        if (mentions(lowered, names[i]))
            out.push_back(i);
    return out;
}

auto answer_grid(const ValueGrid& grid, std::string_view question) -> std::string
{
    auto const lowered = text::to_lower(question);
    auto const rows = mentioned_indices(lowered, grid.rows);
    auto const cols = mentioned_indices(lowered, grid.columns);
    auto const aggregate = mentions(lowered, "total") || mentions(lowered, "sum");

    auto values = std::vector<std::string> {};
    if (rows.size() == 1)
    {
        auto const& row = grid.values[rows.front()];
        if (aggregate && cols.empty())
            return std::to_string(std::accumulate(row.begin(), row.end(), 0LL));
        if (cols.empty())
            for (auto v: row)
                values.push_back(std::to_string(v));
        else
            for (auto c: cols)
                values.push_back(std::to_string(row[c]));
    }
    else if (cols.size() == 1 && !aggregate)
    {
        auto const& selected = rows.empty() ? [&] {
            auto all = std::vector<std::size_t>(grid.rows.size());
            std::iota(all.begin(), all.end(), std::size_t { 0 });
            return all;
        }()
                                            : rows;
        for (auto r: selected)
            values.push_back(std::to_string(grid.values[r][cols.front()]));
    }
    if (values.empty())
        return std::string(InsufficientInformation);
    return text::join_list(values);
}

auto answer_shapes(const std::vector<ShapeEntity>& shapes, std::string_view question) -> std::string
{
    auto const lowered = text::to_lower(question);
    auto const* entity = static_cast<const ShapeEntity*>(nullptr);
    auto hits = 0;
    for (auto const& e: shapes)
        if (mentions(lowered, e.name))
        {
            entity = &e;
            ++hits;
        }
    if (hits != 1)
        return std::string(InsufficientInformation);

    for (auto const& [key, value]: entity->attributes)
        if (mentions(lowered, key))
            return value;
    return std::string(InsufficientInformation);
}

auto sycophant_paragraph(int id) -> ParagraphVerification
{
    return ParagraphVerification {
        .paragraph_id = id,
        .segments = {
            { SegmentKind::Planning, "The paragraph follows naturally from the problem; no tool call is needed." },
            { SegmentKind::Analysis, "The reasoning in this paragraph looks sound and consistent with the solution." },
            { SegmentKind::Verdict, std::string(to_token(Verdict::Correct)) },
        },
        .verdict = Verdict::Correct,
    };
}

} // namespace

ReplayBackend::ReplayBackend(std::string id, std::map<std::string, std::string> table):
    _id(std::move(id)), _table(std::move(table))
{
}

auto ReplayBackend::load(std::string id, const std::filesystem::path& path) -> Expected<ReplayBackend, std::string>
{
    auto in = std::ifstream(path);
    if (!in)
        return unexpected("cannot open replay table " + path.string());
    auto table = std::map<std::string, std::string> {};
    auto line = std::string {};
    auto lineNo = 0;
    while (std::getline(in, line))
    {
        ++lineNo;
        if (text::trim(line).empty())
            continue;
        auto const j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("hash") || !j.contains("text") || !j["hash"].is_string()
            || !j["text"].is_string())
            return unexpected(path.string() + ":" + std::to_string(lineNo) + ": expected {\"hash\", \"text\"}");
        table[j["hash"].get<std::string>()] = j["text"].get<std::string>();
    }
    return ReplayBackend(std::move(id), std::move(table));
}

void ReplayBackend::record(const GenerationRequest& request, std::string text)
{
    _table[request_hash(request)] = std::move(text);
}

auto ReplayBackend::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    if (auto invalid = validate_request(request))
        return unexpected(*invalid);
    auto const it = _table.find(request_hash(request));
    if (it == _table.end())
        return protocol_error("no recorded reply for request " + request_hash(request));
    return apply_stop_sequences(it->second, request.stop_sequences);
}

ScriptedBackend::ScriptedBackend(std::string id, std::vector<std::string> turns):
    _id(std::move(id)), _turns(std::move(turns))
{
}

auto ScriptedBackend::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    if (auto invalid = validate_request(request))
        return unexpected(*invalid);
    auto const turn = text::count_occurrences(assistant_prefix(request), close_tag(SegmentKind::ToolResponse));
    if (turn >= _turns.size())
        return protocol_error("script '" + _id + "' has no turn " + std::to_string(turn));
    return apply_stop_sequences(_turns[turn], request.stop_sequences);
}

auto SycophantBackend::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    if (auto invalid = validate_request(request))
        return unexpected(*invalid);
    auto const steps = prompt_steps(request);
    if (steps.empty())
        return protocol_error("prompt contains no <paragraph_i> blocks");
    auto trajectory = Trajectory {};
    for (auto i = std::size_t { 0 }; i < steps.size(); ++i)
        trajectory.paragraphs.push_back(sycophant_paragraph(static_cast<int>(i) + 1));
    return apply_stop_sequences(render_trajectory(trajectory), request.stop_sequences);
}

auto oracle_answer_one(const Scene& scene, std::string_view question) -> std::string
{
    if (scene.kind == SceneKind::ValueGrid)
        return answer_grid(scene.grid, question);
    return answer_shapes(scene.shapes, question);
}

auto oracle_answer(const Scene& scene, const std::vector<std::string>& questions) -> std::string
{
    if (questions.size() == 1)
        return oracle_answer_one(scene, questions.front());
    auto out = std::string {};
    for (auto i = std::size_t { 0 }; i < questions.size(); ++i)
    {
        if (i > 0)
            out += "\n";
        out += std::to_string(i + 1) + ". " + oracle_answer_one(scene, questions[i]);
    }
    return out;
}

auto OracleAnswerer::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    if (auto invalid = validate_request(request))
        return unexpected(*invalid);
    auto const questions = answerer_questions(request);
    if (questions.empty())
        return protocol_error("answerer request carries no numbered questions");

    auto const* scene = static_cast<const Scene*>(nullptr);
    for (auto const& m: request.messages)
        for (auto const& img: m.images)
            if (!scene && img.scene)
                scene = img.scene.get();

    // Without ground truth every question is unanswerable; an empty shape
    // set yields exactly that.
    static auto const blank = Scene { .kind = SceneKind::ShapeSet };
    if (!scene)
        scene = &blank;
    return apply_stop_sequences(oracle_answer(*scene, questions), request.stop_sequences);
}

auto RecordingBackend::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    {
        auto lock = std::scoped_lock(_mutex);
        _requests.push_back(request);
    }
    return _inner.generate(request);
}

auto RecordingBackend::requests() const -> std::vector<GenerationRequest>
{
    auto lock = std::scoped_lock(_mutex);
    return _requests;
}

} // namespace tim
