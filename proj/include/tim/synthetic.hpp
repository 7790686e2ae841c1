// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/backend.hpp>
#include <tim/engine.hpp>
#include <tim/expected.hpp>
#include <tim/scene.hpp>

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

// Offline problems with known ground truth and controlled error injection.
//
// A problem asks for the total of one row of a value grid. Its steps are:
// one or more read steps stating cell values, a fact step stating how a
// total is formed, a sum step and a concluding step.
namespace tim::synth
{

enum class InjectionKind
{
    Perception,  // a read value replaced, downstream arithmetic kept consistent
    Calculation, // the stated sum perturbed, read values true
    Knowledge,   // the fact step replaced by a wrong fact
};

auto to_string(InjectionKind kind) -> std::string_view;
auto parse_injection_kind(std::string_view name) -> std::optional<InjectionKind>;

enum class StepRole
{
    Read,
    Fact,
    Sum,
    Conclude,
};

struct Injection
{
    std::size_t step_index = 1; // 1-based
    InjectionKind kind = InjectionKind::Perception;

    auto operator==(const Injection&) const -> bool = default;
};

struct InjectionSpec
{
    std::size_t step_index = 1;
    InjectionKind kind = InjectionKind::Perception;
    /// Perception only: the wrong value to state. Defaults to a digit rotation
    /// of the true value (119 -> 191).
    std::optional<long long> replacement;
};

struct ProblemConfig
{
    std::size_t rows = 3;
    std::size_t cols = 4;
    /// Number of read steps; columns are split into contiguous groups.
    /// 0 means one read step per column.
    std::size_t read_steps = 0;
    ValueRange range;
};

struct SyntheticProblem
{
    Problem problem;
    Scene scene;
    std::optional<Injection> injection;

    std::size_t target_row = 0;
    std::vector<std::vector<std::size_t>> read_groups; // column indices per read step
    std::vector<long long> stated_values;              // per column, as the steps state them
    long long stated_sum = 0;
    std::string fact;
    std::vector<StepRole> roles;
};

/// The one correct fact the fact step states, and its wrong variants.
auto correct_fact() -> std::string_view;
auto wrong_facts() -> std::span<const std::string_view>;

/// Deterministic in (seed, config).
auto generate_problem(std::uint64_t seed, const ProblemConfig& config) -> SyntheticProblem;

/// Problem over a given grid and target row, all steps correct.
auto make_problem(std::string id, Scene scene, std::size_t target_row, std::size_t read_steps = 0) -> SyntheticProblem;

struct InjectionError
{
    std::string kind = "incompatible_step_kind";
    std::string detail;
};

auto inject_error(const SyntheticProblem& problem, const InjectionSpec& spec) -> Expected<SyntheticProblem, InjectionError>;

/// Correct before the injected step, Incorrect at it, Neutral after.
auto gold_labels(const SyntheticProblem& problem) -> std::vector<Verdict>;

/// Question the tool-grounded policy asks about one read step.
auto read_question(const std::string& row, const std::vector<std::string>& columns) -> std::string;

/// Corpus record: data_curation input fields plus scene and injection.
auto to_record(const SyntheticProblem& problem) -> nlohmann::json;

/// Verifier policy that checks each read step against the tool, each sum
/// exactly, the fact against a fixed table and the conclusion against the
/// sum. A pure function of the request.
class ToolGroundedPolicy final: public Backend
{
  public:
    [[nodiscard]] auto id() const -> std::string override { return "tool-grounded"; }
    auto generate(const GenerationRequest& request) -> Expected<GenerationResult, BackendError> override;
};

} // namespace tim::synth
