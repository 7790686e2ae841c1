// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/engine.hpp>
#include <tim/expected.hpp>
#include <tim/trajectory.hpp>

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

// Training-data curation: format and consensus filters, D+/D- partition,
// the weighted loss, and the first-error and tool-frequency analyses.
namespace tim::curation
{

struct RawSample
{
    std::string id;
    std::string question;
    std::vector<std::string> images;
    std::vector<std::string> steps;
    std::optional<std::vector<double>> mcts_scores; // per-step rollout success in [0, 1]
    std::optional<std::vector<Verdict>> mcts_labels;
    std::optional<bool> answer_correct;
    std::optional<std::string> transcript; // teacher output, when supplied
    nlohmann::json record;                 // the input line, passed through
};

auto sample_from_json(const nlohmann::json& j) -> Expected<RawSample, std::string>;

enum class CurationErrorKind
{
    MissingMctsScores,
    LengthMismatch,
    InvalidWeight,
    InvalidLoss,
};

auto to_string(CurationErrorKind kind) -> std::string_view;

struct CurationError
{
    CurationErrorKind kind;
    std::string detail;
};

struct Candidate
{
    RawSample sample;
    Trajectory trajectory;
    std::vector<Verdict> verdicts;
    std::string transcript;
};

struct Drop
{
    std::string id;
    std::string reason; // a FormatErrorKind name, low_confidence or first_error_mismatch
    std::string detail;
};

/// Kept iff the transcript parses, validates and has one paragraph per step.
auto format_filter(const RawSample& sample, std::string_view teacher_output) -> Expected<Candidate, Drop>;

struct Thresholds
{
    double tau_correct = 0.7;
    double tau_incorrect = 0.0;
};

enum class MctsLabel
{
    Correct,
    Incorrect,
    LowConfidence,
};

/// Scores are thresholded; 3-valued labels are used as given (Neutral
/// counts as correct). Scores win when both are present.
auto mcts_step_labels(const RawSample& sample, const Thresholds& thresholds)
    -> Expected<std::vector<MctsLabel>, CurationError>;

auto mcts_first_error(std::span<const MctsLabel> labels) -> std::optional<std::size_t>;

struct ConsensusDecision
{
    bool keep = false;
    std::optional<Drop> drop;
    std::optional<std::size_t> mcts_first_error;
    std::optional<std::size_t> teacher_first_error;
};

/// Drops when any step up to the check point (the MCTS first error, or the
/// last step when there is none) is low-confidence, or when the teacher's
/// first Incorrect differs from the MCTS first error.
auto consensus_filter(const Candidate& candidate, const Thresholds& thresholds)
    -> Expected<ConsensusDecision, CurationError>;

enum class Partition
{
    DPlus,
    DMinus,
};

auto to_string(Partition p) -> std::string_view;

/// DMinus iff some verdict is Incorrect.
auto partition_of(std::span<const Verdict> verdicts) -> Partition;

struct CuratedSample
{
    Candidate candidate;
    Partition partition = Partition::DPlus;
    double weight = 1.0;
};

struct WeightPolicy
{
    double w = 10.0;
    /// Permits 0 < w <= 1 for ablations; a warning is still emitted.
    bool allow_non_upweight = false;
};

/// Empty when acceptable; warnings in `warnings`.
auto check_weight(const WeightPolicy& policy, std::vector<std::string>& warnings) -> std::optional<CurationError>;

struct WeightedDataset
{
    std::vector<CuratedSample> samples;
    std::vector<std::string> warnings;
};

auto partition_and_weight(std::vector<Candidate> candidates, const WeightPolicy& policy)
    -> Expected<WeightedDataset, CurationError>;

struct LossResult
{
    double value = 0.0;
    std::vector<std::string> warnings;
};

/// mean(losses over D+) + w * mean(losses over D-). An empty partition
/// contributes 0 and a warning.
auto weighted_nll(std::span<const double> losses, std::span<const Partition> partitions, double w)
    -> Expected<LossResult, CurationError>;

/// Output line: the input record plus transcript, prompt, verdicts,
/// partition and weight.
auto curated_record(const CuratedSample& sample, const GenerationRequest& prompt) -> nlohmann::json;

// ---- first-error analysis ----------------------------------------------

struct FirstErrorObservation
{
    std::string id;
    long long mcts = -1;    // -1 for none
    long long teacher = -1;
    bool kept = false;
};

using Histogram = std::map<long long, std::uint64_t>;
using Grid = std::map<std::pair<long long, long long>, std::uint64_t>; // (mcts, teacher) -> count

struct FirstErrorAnalysis
{
    Histogram mcts;
    Histogram teacher;
    Histogram consensus; // kept samples only
    Grid grid;
    Grid kept_grid;
};

auto analyze_first_error_distribution(std::span<const FirstErrorObservation> observations) -> FirstErrorAnalysis;

auto off_diagonal_mass(const Grid& grid) -> std::uint64_t;

auto to_json(const FirstErrorAnalysis& analysis) -> nlohmann::json;

/// Three histograms and the agreement grid as a flat SVG.
auto render_svg(const FirstErrorAnalysis& analysis) -> std::string;

// ---- tool frequency ----------------------------------------------------

struct ToolUsage
{
    std::string benchmark;
    std::vector<Verdict> gold;
    std::vector<std::size_t> tool_calls; // per paragraph
};

struct FrequencyCell
{
    std::uint64_t steps = 0;
    std::uint64_t with_tool = 0;

    [[nodiscard]] auto fraction() const -> double;
};

struct FrequencyRow
{
    FrequencyCell correct; // gold Correct or Neutral
    FrequencyCell incorrect;
};

struct ToolFrequencyReport
{
    std::map<std::string, FrequencyRow> per_benchmark;
    FrequencyRow overall;
    std::vector<std::string> warnings;
};

auto tool_frequency_report(std::span<const ToolUsage> runs) -> ToolFrequencyReport;

/// {"columns": [...], "rows": {"<bench>": {"Cor": "x.y", "Inc": "x.y"}, ..., "Overall": ...}}
auto to_json(const ToolFrequencyReport& report) -> nlohmann::json;
auto to_table(const ToolFrequencyReport& report) -> std::string;

} // namespace tim::curation
