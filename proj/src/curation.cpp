// SPDX-License-Identifier: Apache-2.0
#include <tim/curation.hpp>
#include <tim/dataset.hpp>
#include <tim/metrics.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

namespace tim::curation
{

namespace
{

auto first_incorrect(std::span<const Verdict> verdicts) -> std::optional<std::size_t>
{
    return metrics::first_error_index(verdicts);
}

auto histogram_json(const Histogram& h) -> nlohmann::json
{
    auto out = nlohmann::json::object();
    for (auto const& [index, count]: h)
        out[std::to_string(index)] = count;
    return out;
}

auto grid_json(const Grid& g) -> nlohmann::json
{
    auto out = nlohmann::json::array();
    for (auto const& [cell, count]: g)
        out.push_back({ { "mcts", cell.first }, { "teacher", cell.second }, { "count", count } });
    return out;
}

auto collect_indices(const FirstErrorAnalysis& a) -> std::vector<long long>
{
    auto set = std::set<long long> {};
    for (auto const* h: { &a.mcts, &a.teacher, &a.consensus })
        for (auto const& [index, _]: *h)
            set.insert(index);
    for (auto const& [cell, _]: a.grid)
    {
        set.insert(cell.first);
        set.insert(cell.second);
    }
    return { set.begin(), set.end() };
}

auto index_label(long long index) -> std::string
{
    return index < 0 ? std::string("none") : std::to_string(index);
}

} // namespace

auto sample_from_json(const nlohmann::json& j) -> Expected<RawSample, std::string>
{
    auto problem = dataset::problem_from_record(j);
    if (!problem)
        return unexpected(problem.error());
    auto s = RawSample { .id = problem->id, .question = problem->question, .steps = problem->steps, .record = j };
    for (auto const& i: problem->images)
        if (!i.source.empty())
            s.images.push_back(i.source);

    if (j.contains("mcts_scores") && !j["mcts_scores"].is_null())
    {
        if (!j["mcts_scores"].is_array())
            return unexpected(std::string("'mcts_scores' must be an array"));
        auto scores = std::vector<double> {};
        for (auto const& v: j["mcts_scores"])
        {
            if (!v.is_number())
                return unexpected(std::string("'mcts_scores' entries must be numbers"));
            auto const x = v.get<double>();
            if (!(x >= 0.0 && x <= 1.0))
                return unexpected("'mcts_scores' entry " + v.dump() + " outside [0, 1]");
            scores.push_back(x);
        }
        if (scores.size() != s.steps.size())
            return unexpected("'mcts_scores' has " + std::to_string(scores.size()) + " entries for "
                              + std::to_string(s.steps.size()) + " steps");
        s.mcts_scores = std::move(scores);
    }
    if (j.contains("mcts_labels") && !j["mcts_labels"].is_null())
    {
        auto labels = dataset::labels_from_json(j["mcts_labels"]);
        if (!labels)
            return unexpected("'mcts_labels': " + labels.error());
        if (labels->size() != s.steps.size())
            return unexpected("'mcts_labels' has " + std::to_string(labels->size()) + " entries for "
                              + std::to_string(s.steps.size()) + " steps");
        s.mcts_labels = std::move(*labels);
    }
    if (j.contains("answer_correct") && j["answer_correct"].is_boolean())
        s.answer_correct = j["answer_correct"].get<bool>();
    if (j.contains("transcript") && j["transcript"].is_string())
        s.transcript = j["transcript"].get<std::string>();
    return s;
}

auto to_string(CurationErrorKind kind) -> std::string_view
{
    switch (kind)
    {
        case CurationErrorKind::MissingMctsScores: return "missing_mcts_scores";
        case CurationErrorKind::LengthMismatch: return "length_mismatch";
        case CurationErrorKind::InvalidWeight: return "invalid_weight";
        case CurationErrorKind::InvalidLoss: return "invalid_loss";
    }
    return "invalid_weight";
}

auto format_filter(const RawSample& sample, std::string_view teacher_output) -> Expected<Candidate, Drop>
{
    auto scan = scan_trajectory(teacher_output);
    auto trajectory = Trajectory { std::move(scan.paragraphs) };
    auto errors = std::move(scan.errors);
    if (errors.empty())
        errors = validate_format(trajectory, sample.steps.size());
    if (!errors.empty())
    {
        auto const& e = errors.front();
        return unexpected(Drop { sample.id, std::string(to_string(e.kind)), e.detail });
    }
    auto verdicts = trajectory.verdicts();
    return Candidate { sample, std::move(trajectory), std::move(verdicts), std::string(teacher_output) };
}

auto mcts_step_labels(const RawSample& sample, const Thresholds& thresholds)
    -> Expected<std::vector<MctsLabel>, CurationError>
{
    auto labels = std::vector<MctsLabel> {};
    if (sample.mcts_scores)
    {
        for (auto s: *sample.mcts_scores)
            labels.push_back(s >= thresholds.tau_correct    ? MctsLabel::Correct
                             : s <= thresholds.tau_incorrect ? MctsLabel::Incorrect
                                                             : MctsLabel::LowConfidence);
    }
    else if (sample.mcts_labels)
    {
        for (auto v: *sample.mcts_labels)
            labels.push_back(v == Verdict::Incorrect ? MctsLabel::Incorrect : MctsLabel::Correct);
    }
    else
        return unexpected(CurationError { CurationErrorKind::MissingMctsScores, "sample '" + sample.id + "'" });

    if (labels.size() != sample.steps.size())
        return unexpected(CurationError { CurationErrorKind::LengthMismatch,
                                          "sample '" + sample.id + "': " + std::to_string(labels.size())
                                              + " MCTS labels for " + std::to_string(sample.steps.size())
                                              + " steps" });
    return labels;
}

auto mcts_first_error(std::span<const MctsLabel> labels) -> std::optional<std::size_t>
{
    auto const it = std::find(labels.begin(), labels.end(), MctsLabel::Incorrect);
    if (it == labels.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin()) + 1;
}

auto consensus_filter(const Candidate& candidate, const Thresholds& thresholds)
    -> Expected<ConsensusDecision, CurationError>
{
    auto labels = mcts_step_labels(candidate.sample, thresholds);
    if (!labels)
        return unexpected(labels.error());

    auto decision = ConsensusDecision {
        .mcts_first_error = mcts_first_error(*labels),
        .teacher_first_error = first_incorrect(candidate.verdicts),
    };
    auto const check_point = decision.mcts_first_error.value_or(labels->size());
    for (auto i = std::size_t { 0 }; i < check_point; ++i)
    {
        if ((*labels)[i] == MctsLabel::LowConfidence)
        {
            decision.drop = Drop { candidate.sample.id, "low_confidence",
                                   "step " + std::to_string(i + 1) + " MCTS score between thresholds" };
            return decision;
        }
    }
    if (decision.mcts_first_error != decision.teacher_first_error)
    {
        auto const name = [](std::optional<std::size_t> i) { return i ? std::to_string(*i) : std::string("none"); };
        decision.drop = Drop { candidate.sample.id, "first_error_mismatch",
                               "MCTS first error " + name(decision.mcts_first_error) + ", teacher "
                                   + name(decision.teacher_first_error) };
        return decision;
    }
    decision.keep = true;
    return decision;
}

auto to_string(Partition p) -> std::string_view
{
    return p == Partition::DPlus ? "D+" : "D-";
}

auto partition_of(std::span<const Verdict> verdicts) -> Partition
{
    return std::find(verdicts.begin(), verdicts.end(), Verdict::Incorrect) == verdicts.end() ? Partition::DPlus
                                                                                              : Partition::DMinus;
}

auto check_weight(const WeightPolicy& policy, std::vector<std::string>& warnings) -> std::optional<CurationError>
{
    if (!std::isfinite(policy.w) || policy.w <= 0.0)
        return CurationError { CurationErrorKind::InvalidWeight, "w must be a positive finite number" };
    if (policy.w <= 1.0)
    {
        if (!policy.allow_non_upweight)
            return CurationError { CurationErrorKind::InvalidWeight,
                                   "w must exceed 1 (pass the ablation override to allow w <= 1)" };
        warnings.push_back("w = " + std::to_string(policy.w) + " does not upweight D-; ablation override in effect");
    }
    return std::nullopt;
}

auto partition_and_weight(std::vector<Candidate> candidates, const WeightPolicy& policy)
    -> Expected<WeightedDataset, CurationError>
{
    auto out = WeightedDataset {};
    if (auto error = check_weight(policy, out.warnings))
        return unexpected(*error);
    for (auto& c: candidates)
    {
        auto const p = partition_of(c.verdicts);
        out.samples.push_back({ std::move(c), p, p == Partition::DPlus ? 1.0 : policy.w });
    }
    return out;
}

auto weighted_nll(std::span<const double> losses, std::span<const Partition> partitions, double w)
    -> Expected<LossResult, CurationError>
{
    if (losses.size() != partitions.size())
        return unexpected(CurationError { CurationErrorKind::LengthMismatch,
                                          std::to_string(losses.size()) + " losses for "
                                              + std::to_string(partitions.size()) + " partitions" });
    auto sum = std::array<double, 2> {};
    auto count = std::array<std::size_t, 2> {};
    for (auto i = std::size_t { 0 }; i < losses.size(); ++i)
    {
        if (!std::isfinite(losses[i]) || losses[i] < 0.0)
            return unexpected(CurationError { CurationErrorKind::InvalidLoss,
                                              "loss " + std::to_string(i) + " is negative or not finite" });
        auto const k = partitions[i] == Partition::DPlus ? 0 : 1;
        sum[k] += losses[i];
        ++count[k];
    }
    auto result = LossResult {};
    auto mean = std::array<double, 2> {};
    for (auto k = 0; k < 2; ++k)
    {
        if (count[k] == 0)
            result.warnings.push_back(std::string("partition ") + (k == 0 ? "D+" : "D-")
                                      + " is empty; its term contributes 0");
        else
            mean[k] = sum[k] / static_cast<double>(count[k]);
    }
    result.value = mean[0] + w * mean[1];
    return result;
}

auto curated_record(const CuratedSample& sample, const GenerationRequest& prompt) -> nlohmann::json
{
    auto out = sample.candidate.sample.record;
    auto messages = nlohmann::json::array();
    for (auto const& m: prompt.messages)
        messages.push_back({ { "role", to_string(m.role) }, { "content", m.text } });
    out["prompt"] = messages;
    out["transcript"] = sample.candidate.transcript;
    out["verdicts"] = dataset::labels_to_json(sample.candidate.verdicts);
    out["partition"] = to_string(sample.partition);
    out["weight"] = sample.weight;
    return out;
}

auto analyze_first_error_distribution(std::span<const FirstErrorObservation> observations) -> FirstErrorAnalysis
{
    auto a = FirstErrorAnalysis {};
    for (auto const& o: observations)
    {
        ++a.mcts[o.mcts];
        ++a.teacher[o.teacher];
        ++a.grid[{ o.mcts, o.teacher }];
        if (o.kept)
        {
            ++a.consensus[o.mcts];
            ++a.kept_grid[{ o.mcts, o.teacher }];
        }
    }
    return a;
}

auto off_diagonal_mass(const Grid& grid) -> std::uint64_t
{
    auto total = std::uint64_t { 0 };
    for (auto const& [cell, count]: grid)
        if (cell.first != cell.second)
            total += count;
    return total;
}

auto to_json(const FirstErrorAnalysis& analysis) -> nlohmann::json
{
    return {
        { "histograms",
          { { "mcts", histogram_json(analysis.mcts) },
            { "teacher", histogram_json(analysis.teacher) },
            { "consensus", histogram_json(analysis.consensus) } } },
        { "grid", grid_json(analysis.grid) },
        { "kept_grid", grid_json(analysis.kept_grid) },
        { "off_diagonal", off_diagonal_mass(analysis.grid) },
        { "kept_off_diagonal", off_diagonal_mass(analysis.kept_grid) },
    };
}

auto render_svg(const FirstErrorAnalysis& analysis) -> std::string
{
    constexpr auto BarW = 22;
    constexpr auto ChartH = 120;
    constexpr auto Cell = 22;
    auto const indices = collect_indices(analysis);
    auto const n = static_cast<int>(indices.size());
    auto const panelW = std::max(160, BarW * n + 40);
    auto const gridSide = Cell * (n + 1);
    auto const width = panelW * 3 + gridSide + 60;
    auto const height = std::max(ChartH + 60, gridSide + 60);

    auto out = std::ostringstream {};
    out << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height << "\">";
    out << R"(<rect width="100%" height="100%" fill="white"/>)";

    auto const panels = std::array<std::pair<const char*, const Histogram*>, 3> {
        std::pair { "MCTS", &analysis.mcts },
        std::pair { "Teacher", &analysis.teacher },
        std::pair { "Consensus", &analysis.consensus },
    };
    for (auto p = 0; p < 3; ++p)
    {
        auto const& [title, hist] = panels[p];
        auto peak = std::uint64_t { 1 };
        for (auto const& [_, c]: *hist)
            peak = std::max(peak, c);
        auto const x0 = p * panelW + 20;
        out << "<text x=\"" << x0 << R"(" y="16" font-family="sans-serif" font-size="12">)" << title << "</text>";
        for (auto i = 0; i < n; ++i)
        {
            auto const it = hist->find(indices[i]);
            auto const c = it == hist->end() ? 0 : it->second;
            auto const h = static_cast<int>(ChartH * c / peak);
            out << "<rect x=\"" << x0 + i * BarW << "\" y=\"" << 30 + ChartH - h << "\" width=\"" << BarW - 4
                << "\" height=\"" << h << R"(" fill="steelblue"/>)";
            out << "<text x=\"" << x0 + i * BarW << "\" y=\"" << 30 + ChartH + 14
                << R"(" font-family="sans-serif" font-size="9">)" << index_label(indices[i]) << "</text>";
        }
    }

    auto peak = std::uint64_t { 1 };
    for (auto const& [_, c]: analysis.grid)
        peak = std::max(peak, c);
    auto const gx = panelW * 3 + 40;
    out << "<text x=\"" << gx << R"(" y="16" font-family="sans-serif" font-size="12">MCTS (rows) x Teacher (cols)</text>)";
    for (auto r = 0; r < n; ++r)
    {
        for (auto c = 0; c < n; ++c)
        {
            auto const it = analysis.grid.find({ indices[r], indices[c] });
            auto const v = it == analysis.grid.end() ? 0 : it->second;
            auto const shade = 255 - static_cast<int>(200 * v / peak);
            out << "<rect x=\"" << gx + Cell * (c + 1) << "\" y=\"" << 30 + Cell * (r + 1) << "\" width=\"" << Cell
                << "\" height=\"" << Cell << "\" fill=\"rgb(" << shade << "," << shade << ",255)\" stroke=\"gray\"/>";
        }
        out << "<text x=\"" << gx << "\" y=\"" << 30 + Cell * (r + 1) + 15
            << R"(" font-family="sans-serif" font-size="9">)" << index_label(indices[r]) << "</text>";
        out << "<text x=\"" << gx + Cell * (r + 1) + 2 << "\" y=\"" << 30 + 15
            << R"(" font-family="sans-serif" font-size="9">)" << index_label(indices[r]) << "</text>";
    }
    out << "</svg>";
    return out.str();
}

auto FrequencyCell::fraction() const -> double
{
    return steps == 0 ? 0.0 : static_cast<double>(with_tool) / static_cast<double>(steps);
}

auto tool_frequency_report(std::span<const ToolUsage> runs) -> ToolFrequencyReport
{
    auto report = ToolFrequencyReport {};
    for (auto const& run: runs)
    {
        if (run.gold.size() != run.tool_calls.size())
        {
            report.warnings.push_back("benchmark " + run.benchmark + ": run with " + std::to_string(run.tool_calls.size())
                                      + " paragraphs for " + std::to_string(run.gold.size())
                                      + " gold steps skipped");
            continue;
        }
        auto& row = report.per_benchmark[run.benchmark];
        for (auto i = std::size_t { 0 }; i < run.gold.size(); ++i)
        {
            auto const used = run.tool_calls[i] > 0 ? 1u : 0u;
            for (auto* r: { &row, &report.overall })
            {
                auto& cell = run.gold[i] == Verdict::Incorrect ? r->incorrect : r->correct;
                ++cell.steps;
                cell.with_tool += used;
            }
        }
    }
    return report;
}

auto to_json(const ToolFrequencyReport& report) -> nlohmann::json
{
    auto const cell = [](const FrequencyRow& r) {
        return nlohmann::json {
            { "Cor", metrics::percent(r.correct.fraction()) },
            { "Inc", metrics::percent(r.incorrect.fraction()) },
            { "cor_steps", r.correct.steps },
            { "cor_with_tool", r.correct.with_tool },
            { "inc_steps", r.incorrect.steps },
            { "inc_with_tool", r.incorrect.with_tool },
        };
    };
    auto names = std::vector<std::string> {};
    for (auto known: metrics::KnownBenchmarks)
        if (report.per_benchmark.contains(std::string(known)))
            names.emplace_back(known);
    for (auto const& [name, _]: report.per_benchmark)
        if (std::find(names.begin(), names.end(), name) == names.end())
            names.push_back(name);

    auto columns = names;
    columns.emplace_back("Overall");
    auto rows = nlohmann::json::object();
    for (auto const& name: names)
        rows[name] = cell(report.per_benchmark.at(name));
    rows["Overall"] = cell(report.overall);
    return { { "columns", columns }, { "rows", rows }, { "warnings", report.warnings } };
}

auto to_table(const ToolFrequencyReport& report) -> std::string
{
    auto const j = to_json(report);
    auto header = std::string("|");
    auto sub = std::string("|");
    auto values = std::string("|");
    for (auto const& name: j["columns"])
    {
        header += " " + name.get<std::string>() + " ||";
        sub += " Cor | Inc |";
        auto const& r = j["rows"][name.get<std::string>()];
        values += " " + r["Cor"].get<std::string>() + " | " + r["Inc"].get<std::string>() + " |";
    }
    return header + "\n" + sub + "\n" + values + "\n";
}

} // namespace tim::curation
