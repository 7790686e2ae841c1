// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/verdict.hpp>

#include <json.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace tim::metrics
{

/// Reported benchmark columns, in display order.
inline constexpr auto KnownBenchmarks = std::array<std::string_view, 5> {
    "MMMU", "MathVision", "MathVerse-VO", "DynaMath", "WeMath",
};

/// Current metric definitions. FISI counts an exact index match as the only
/// hit; alternate definitions would get a new tag.
inline constexpr auto MacroF1Version = std::string_view { "macro_f1/binary-v1" };
inline constexpr auto FisiVersion = std::string_view { "fisi_f1/exact-index-v1" };

enum class Binary
{
    Positive,
    Negative,
};

/// Correct and Neutral are positive; Incorrect is negative.
auto binarize(Verdict label) -> Binary;

/// 1-based index of the first Incorrect step.
auto first_error_index(std::span<const Verdict> labels) -> std::optional<std::size_t>;

/// first_error_index with none encoded as -1.
auto first_error_code(std::span<const Verdict> labels) -> long long;

struct EvalRecord
{
    std::string id;
    std::string benchmark;
    std::vector<Verdict> gold;
    std::vector<Verdict> predicted;
};

struct Confusion
{
    std::uint64_t tp = 0;
    std::uint64_t fp = 0;
    std::uint64_t fn = 0;
    std::uint64_t tn = 0;

    auto operator+=(const Confusion& o) -> Confusion&;
    auto operator==(const Confusion&) const -> bool = default;
};

/// 2tp / (2tp + fp + fn); 1.0 when tp + fp + fn == 0.
auto f1(const Confusion& c) -> double;

struct Score
{
    double value = 0.0;
    std::uint64_t records = 0;
    std::uint64_t steps = 0;
    /// Macro F1: "positive" and "negative" classes. FISI: a single "first_error" entry.
    std::map<std::string, Confusion> confusion;
    bool degenerate = false;
};

struct F1Report
{
    std::string metric;
    std::map<std::string, Score> per_benchmark;
    /// Pooled over every step (primary).
    Score overall;
    /// Unweighted mean of the per-benchmark values.
    double overall_benchmark_mean = 0.0;
    std::vector<std::string> excluded; // length mismatches
    std::vector<std::string> warnings;
};

auto macro_f1(std::span<const EvalRecord> records) -> F1Report;
auto fisi_f1(std::span<const EvalRecord> records) -> F1Report;

/// Benchmarks in display order: the known five first, then the rest sorted.
auto ordered_benchmarks(const F1Report& report) -> std::vector<std::string>;

auto to_json(const F1Report& report) -> nlohmann::json;

/// "61.7"-style percentage with one decimal.
auto percent(double fraction) -> std::string;

} // namespace tim::metrics
