// SPDX-License-Identifier: Apache-2.0
#include <tim/metrics.hpp>
#include <tim/synthetic.hpp>
#include <tim/text.hpp>
#include <tim/tool.hpp>

#include <array>
#include <numeric>
#include <random>

namespace tim::synth
{

namespace
{

constexpr auto CorrectFact = std::string_view { "The total of a row is the sum of all of its entries." };
constexpr auto WrongFacts = std::array<std::string_view, 3> {
    "The total of a row is the product of all of its entries.",
    "The total of a row is the largest of its entries.",
    "The total of a row is the sum of its entries minus the first entry.",
};

constexpr auto ReadPrefix = std::string_view { "Reading the chart, " };
constexpr auto SumPrefix = std::string_view { "Adding the entries: " };
constexpr auto ConcludePrefix = std::string_view { "Therefore, the total for " };

auto column_label(std::size_t index) -> std::string
{
    auto label = std::string {};
    auto n = index + 1;
    while (n > 0)
    {
        --n;
        label.insert(label.begin(), static_cast<char>('A' + n % 26));
        n /= 26;
    }
    return "Store " + label;
}

auto row_label(std::size_t index) -> std::string
{
    return "Product " + std::to_string(index + 1);
}

// FNV-1a; stable across platforms, unlike std::hash.
auto stable_hash(std::string_view s) -> std::uint64_t
{
    auto h = std::uint64_t { 1469598103934665603ULL };
    for (unsigned char c: s)
    {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

auto split_groups(std::size_t cols, std::size_t groups) -> std::vector<std::vector<std::size_t>>
{
    if (groups == 0 || groups > cols)
        groups = cols;
    auto out = std::vector<std::vector<std::size_t>>(groups);
    auto col = std::size_t { 0 };
    for (auto g = std::size_t { 0 }; g < groups; ++g)
    {
        auto const size = cols / groups + (g < cols % groups ? 1 : 0);
        for (auto i = std::size_t { 0 }; i < size; ++i)
            out[g].push_back(col++);
    }
    return out;
}

void render_steps(SyntheticProblem& p)
{
    auto const& grid = p.scene.grid;
    auto const& row = grid.rows[p.target_row];
    auto steps = std::vector<std::string> {};
    auto roles = std::vector<StepRole> {};

    for (auto const& group: p.read_groups)
    {
        auto items = std::vector<std::string> {};
        for (auto c: group)
            items.push_back(std::to_string(p.stated_values[c]) + " under " + grid.columns[c]);
        steps.push_back(std::string(ReadPrefix) + row + " shows " + text::join_list(items) + ".");
        roles.push_back(StepRole::Read);
    }

    steps.push_back(p.fact);
    roles.push_back(StepRole::Fact);

    auto terms = std::string {};
    for (auto i = std::size_t { 0 }; i < p.stated_values.size(); ++i)
        terms += (i ? " + " : "") + std::to_string(p.stated_values[i]);
    steps.push_back(std::string(SumPrefix) + terms + " = " + std::to_string(p.stated_sum) + ".");
    roles.push_back(StepRole::Sum);

    steps.push_back(std::string(ConcludePrefix) + row + " is " + std::to_string(p.stated_sum) + ".");
    roles.push_back(StepRole::Conclude);

    p.problem.steps = std::move(steps);
    p.roles = std::move(roles);
}

auto rotate_digits(long long value) -> long long
{
    auto s = std::to_string(value);
    if (s.size() < 2)
        return value;
    std::rotate(s.begin(), s.begin() + 1, s.end());
    return std::stoll(s);
}

auto perception_replacement(long long value, ValueRange range) -> long long
{
    auto const rotated = rotate_digits(value);
    if (rotated != value && rotated >= range.min && rotated <= range.max)
        return rotated;
    return value + 1 <= range.max ? value + 1 : value - 1;
}

auto incompatible(std::string detail) -> Unexpected<InjectionError>
{
    return unexpected(InjectionError { .detail = std::move(detail) });
}

// ---- tool-grounded policy ----------------------------------------------

struct ReadClaim
{
    std::string row;
    std::vector<std::string> columns;
    std::vector<long long> values;
};

auto parse_read(std::string_view step) -> std::optional<ReadClaim>
{
    if (!text::starts_with(step, ReadPrefix) || step.empty() || step.back() != '.')
        return std::nullopt;
    auto rest = std::string(step.substr(ReadPrefix.size(), step.size() - ReadPrefix.size() - 1));
    auto const shows = rest.find(" shows ");
    if (shows == std::string::npos)
        return std::nullopt;
    auto claim = ReadClaim { .row = rest.substr(0, shows) };
    auto list = rest.substr(shows + 7);

    auto items = std::vector<std::string> {};
    auto const separator = list.find(", ") != std::string::npos ? std::string(", ") : std::string(" and ");
    for (auto pos = std::size_t { 0 }; pos <= list.size();)
    {
        auto next = list.find(separator, pos);
        if (next == std::string::npos)
            next = list.size();
        auto item = std::string(text::trim(std::string_view(list).substr(pos, next - pos)));
        if (text::starts_with(item, "and "))
            item = item.substr(4);
        items.push_back(item);
        pos = next + separator.size();
    }
    for (auto const& item: items)
    {
        auto const under = item.find(" under ");
        if (under == std::string::npos)
            return std::nullopt;
        auto const numbers = text::extract_integers(item.substr(0, under));
        if (numbers.size() != 1)
            return std::nullopt;
        claim.values.push_back(numbers.front());
        claim.columns.push_back(item.substr(under + 7));
    }
    return claim;
}

struct SumClaim
{
    std::vector<long long> terms;
    long long result;
};

auto parse_sum(std::string_view step) -> std::optional<SumClaim>
{
    if (!text::starts_with(step, SumPrefix))
        return std::nullopt;
    auto const eq = step.rfind(" = ");
    if (eq == std::string_view::npos)
        return std::nullopt;
    auto const rhs = text::extract_integers(step.substr(eq + 3));
    if (rhs.size() != 1)
        return std::nullopt;
    return SumClaim { text::extract_integers(step.substr(SumPrefix.size(), eq - SumPrefix.size())), rhs.front() };
}

auto parse_conclusion(std::string_view step) -> std::optional<long long>
{
    if (!text::starts_with(step, ConcludePrefix))
        return std::nullopt;
    auto const is = step.rfind(" is ");
    if (is == std::string_view::npos)
        return std::nullopt;
    auto const values = text::extract_integers(step.substr(is + 4));
    if (values.size() != 1)
        return std::nullopt;
    return values.front();
}

auto numbers_text(const std::vector<long long>& values) -> std::string
{
    auto items = std::vector<std::string> {};
    for (auto v: values)
        items.push_back(std::to_string(v));
    return text::join_list(items);
}

auto tool_responses(std::string_view prefix) -> std::vector<std::string>
{
    auto const open = open_tag(SegmentKind::ToolResponse);
    auto const close = close_tag(SegmentKind::ToolResponse);
    auto out = std::vector<std::string> {};
    for (auto pos = prefix.find(open); pos != std::string_view::npos; pos = prefix.find(open, pos + 1))
    {
        auto const end = prefix.find(close, pos);
        if (end == std::string_view::npos)
            break;
        out.emplace_back(prefix.substr(pos + open.size(), end - pos - open.size()));
    }
    return out;
}

auto block(SegmentKind kind, std::string_view body) -> std::string
{
    return "\n" + open_tag(kind) + "\n" + std::string(body) + "\n" + close_tag(kind) + "\n";
}

} // namespace

auto to_string(InjectionKind kind) -> std::string_view
{
    switch (kind)
    {
        case InjectionKind::Perception: return "perception";
        case InjectionKind::Calculation: return "calculation";
        case InjectionKind::Knowledge: return "knowledge";
    }
    return "perception";
}

auto parse_injection_kind(std::string_view name) -> std::optional<InjectionKind>
{
    for (auto k: { InjectionKind::Perception, InjectionKind::Calculation, InjectionKind::Knowledge })
        if (name == to_string(k))
            return k;
    return std::nullopt;
}

auto correct_fact() -> std::string_view
{
    return CorrectFact;
}

auto wrong_facts() -> std::span<const std::string_view>
{
    return WrongFacts;
}

auto make_problem(std::string id, Scene scene, std::size_t target_row, std::size_t read_steps) -> SyntheticProblem
{
    auto p = SyntheticProblem {};
    auto const& grid = scene.grid;
    p.target_row = target_row;
    p.read_groups = split_groups(grid.columns.size(), read_steps);
    p.stated_values = grid.values[target_row];
    p.stated_sum = std::accumulate(p.stated_values.begin(), p.stated_values.end(), 0LL);
    p.fact = std::string(CorrectFact);

    p.problem.id = std::move(id);
    p.problem.question = "The chart shows the sales of each product in each store. What is the total of "
                         + grid.rows[target_row] + " over every store?";
    auto image = ImageRef::from_scene(scene);
    image.source = "data:image/svg+xml;base64," + crypto::base64_encode(render_scene_svg(scene));
    p.problem.images = { std::move(image) };
    p.scene = std::move(scene);
    render_steps(p);
    return p;
}

auto generate_problem(std::uint64_t seed, const ProblemConfig& config) -> SyntheticProblem
{
    auto rng = std::mt19937_64(seed);
    auto const draw = [&](std::uint64_t n) { return rng() % n; };

    auto scene = Scene { .kind = SceneKind::ValueGrid };
    auto const rows = std::max<std::size_t>(config.rows, 1);
    auto const cols = std::max<std::size_t>(config.cols, 1);
    auto const span = static_cast<std::uint64_t>(config.range.max - config.range.min + 1);
    for (auto r = std::size_t { 0 }; r < rows; ++r)
    {
        scene.grid.rows.push_back(row_label(r));
        auto& values = scene.grid.values.emplace_back();
        for (auto c = std::size_t { 0 }; c < cols; ++c)
            values.push_back(config.range.min + static_cast<long long>(draw(span)));
    }
    for (auto c = std::size_t { 0 }; c < cols; ++c)
        scene.grid.columns.push_back(column_label(c));

    auto const target = static_cast<std::size_t>(draw(rows));
    auto p = make_problem("synth-" + std::to_string(seed), std::move(scene), target, config.read_steps);
    return p;
}

auto inject_error(const SyntheticProblem& problem, const InjectionSpec& spec) -> Expected<SyntheticProblem, InjectionError>
{
    if (problem.injection)
        return incompatible("problem already carries an injection");
    if (spec.step_index < 1 || spec.step_index > problem.roles.size())
        return incompatible("step " + std::to_string(spec.step_index) + " does not exist (problem has "
                            + std::to_string(problem.roles.size()) + " steps)");

    auto const role = problem.roles[spec.step_index - 1];
    auto out = problem;
    switch (spec.kind)
    {
        case InjectionKind::Perception: {
            if (role != StepRole::Read)
                return incompatible("perception injections target value-reading steps");
            auto const column = out.read_groups[spec.step_index - 1].front();
            auto const truth = out.scene.grid.values[out.target_row][column];
            auto const wrong = spec.replacement.value_or(perception_replacement(truth, {}));
            if (wrong == truth)
                return incompatible("replacement equals the true value");
            out.stated_values[column] = wrong;
            out.stated_sum = std::accumulate(out.stated_values.begin(), out.stated_values.end(), 0LL);
            break;
        }
        case InjectionKind::Calculation:
            if (role != StepRole::Sum)
                return incompatible("calculation injections target the arithmetic step");
            out.stated_sum = out.stated_sum >= 1 ? out.stated_sum - 1 : out.stated_sum + 1;
            break;
        case InjectionKind::Knowledge:
            if (role != StepRole::Fact)
                return incompatible("knowledge injections target the fact step");
            out.fact = std::string(WrongFacts[stable_hash(out.problem.id) % WrongFacts.size()]);
            break;
    }
    out.injection = Injection { spec.step_index, spec.kind };
    render_steps(out);
    return out;
}

auto gold_labels(const SyntheticProblem& problem) -> std::vector<Verdict>
{
    auto labels = std::vector<Verdict>(problem.problem.steps.size(), Verdict::Correct);
    if (!problem.injection)
        return labels;
    auto const k = problem.injection->step_index;
    labels[k - 1] = Verdict::Incorrect;
    for (auto i = k; i < labels.size(); ++i)
        labels[i] = Verdict::Neutral;
    return labels;
}

auto read_question(const std::string& row, const std::vector<std::string>& columns) -> std::string
{
    auto quoted = std::vector<std::string> {};
    for (auto const& c: columns)
        quoted.push_back("'" + c + "'");
    return "In row '" + row + "', which numbers appear in the column" + (columns.size() > 1 ? "s " : " ")
           + text::join_list(quoted) + "?";
}

auto to_record(const SyntheticProblem& problem) -> nlohmann::json
{
    auto gold = nlohmann::json::array();
    for (auto v: gold_labels(problem))
        gold.push_back(to_numeric(v));
    auto images = nlohmann::json::array();
    for (auto const& img: problem.problem.images)
        images.push_back(img.source);
    auto injection = nlohmann::json(nullptr);
    if (problem.injection)
        injection = { { "step_index", problem.injection->step_index }, { "kind", to_string(problem.injection->kind) } };
    return {
        { "id", problem.problem.id },
        { "benchmark", "synthetic" },
        { "question", problem.problem.question },
        { "images", images },
        { "steps", problem.problem.steps },
        { "gold", gold },
        { "mcts_labels", gold },
        { "scene", scene_to_json(problem.scene) },
        { "injection", injection },
    };
}

auto ToolGroundedPolicy::generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError>
{
    if (auto invalid = validate_request(request))
        return unexpected(*invalid);
    auto const steps = prompt_steps(request);
    if (steps.empty())
        return unexpected(BackendError { .kind = BackendErrorKind::ProtocolViolation,
                                         .message = "prompt contains no <paragraph_i> blocks" });

    auto const responses = tool_responses(assistant_prefix(request));
    auto chunks = std::vector<std::string> {};
    auto current = std::string {};
    auto lastSum = std::optional<long long> {};
    auto complete = true;

    for (auto i = std::size_t { 0 }; i < steps.size() && complete; ++i)
    {
        auto const& step = steps[i];
        current += (i ? "\n" : "") + std::string("### Paragraph ") + std::to_string(i + 1) + "\n";
        auto analysis = std::string {};
        auto verdict = Verdict::Correct;

        if (auto read = parse_read(step))
        {
            current += block(SegmentKind::Planning,
                             "This paragraph reads cell values off the chart. I will have the tool read the same cells "
                             "without telling it what the paragraph claims.");
            auto const call = AskQuestionsCall { 1, { read_question(read->row, read->columns) } };
            current += "\n" + open_tag(SegmentKind::ToolCall) + "\n" + render_tool_call(call) + "\n"
                       + close_tag(SegmentKind::ToolCall);
            chunks.push_back(std::move(current));
            current.clear();

            auto const k = chunks.size() - 1;
            if (k >= responses.size())
            {
                complete = false;
                break;
            }
            auto const observed = text::extract_integers(responses[k]);
            if (observed.size() != read->values.size() || responses[k].find("TOOL ERROR") != std::string::npos)
                analysis = "The tool could not confirm these cells, and nothing else contradicts the paragraph.";
            else if (observed == read->values)
                analysis = "The tool reads " + numbers_text(observed) + " for these cells, which agrees with the paragraph.";
            else
            {
                analysis = "The tool reads " + numbers_text(observed) + " for these cells, but the paragraph states "
                           + numbers_text(read->values) + ". The paragraph misreads the chart.";
                verdict = Verdict::Incorrect;
            }
        }
        else if (auto sum = parse_sum(step))
        {
            current += block(SegmentKind::Planning, "This paragraph is pure arithmetic, so I will recompute it.");
            auto const actual = std::accumulate(sum->terms.begin(), sum->terms.end(), 0LL);
            if (actual == sum->result)
                analysis = "Recomputing gives " + std::to_string(actual) + ", matching the stated result.";
            else
            {
                analysis = "Recomputing gives " + std::to_string(actual) + ", not the stated "
                           + std::to_string(sum->result) + ".";
                verdict = Verdict::Incorrect;
            }
            lastSum = sum->result;
        }
        else if (auto total = parse_conclusion(step))
        {
            current += block(SegmentKind::Planning, "This paragraph restates the result; I will compare it with the sum above.");
            if (!lastSum || *lastSum == *total)
                analysis = "The conclusion matches the total computed earlier.";
            else
            {
                analysis = "The conclusion states " + std::to_string(*total) + " but the total computed earlier is "
                           + std::to_string(*lastSum) + ".";
                verdict = Verdict::Incorrect;
            }
        }
        else if (step == CorrectFact
                 || std::find(WrongFacts.begin(), WrongFacts.end(), std::string_view(step)) != WrongFacts.end())
        {
            current += block(SegmentKind::Planning, "This paragraph states a general fact; no image lookup is needed.");
            if (step == CorrectFact)
                analysis = "That is the definition of a row total.";
            else
            {
                analysis = "A row total is the sum of its entries, so this statement is wrong.";
                verdict = Verdict::Incorrect;
            }
        }
        else
        {
            current += block(SegmentKind::Planning, "Nothing in this paragraph can be checked against the chart.");
            analysis = "No claim here needs verification.";
            verdict = Verdict::Neutral;
        }

        current += block(SegmentKind::Analysis, analysis);
        current += block(SegmentKind::Verdict, to_token(verdict));
    }
    if (complete)
        chunks.push_back(std::move(current));

    auto const turn = responses.size();
    if (turn >= chunks.size())
        return unexpected(BackendError { .kind = BackendErrorKind::ProtocolViolation,
                                         .message = "more tool responses than tool calls" });
    return apply_stop_sequences(chunks[turn], request.stop_sequences);
}

} // namespace tim::synth
