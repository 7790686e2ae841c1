// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/engine.hpp>
#include <tim/expected.hpp>
#include <tim/metrics.hpp>

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

// Line-delimited record I/O shared by the commands.
namespace tim::dataset
{

struct Line
{
    std::size_t number = 0; // 1-based
    nlohmann::json value;
};

struct LineError
{
    std::size_t number = 0;
    std::string message;
};

struct JsonlFile
{
    std::vector<Line> lines;
    std::vector<LineError> errors;
};

/// Blank lines are skipped. Fails only when the file cannot be opened.
auto read_jsonl(const std::filesystem::path& path) -> Expected<JsonlFile, std::string>;

/// Problem fields of a corpus record. A `scene` field is attached to the
/// first image so the oracle answerer can read it.
auto problem_from_record(const nlohmann::json& record) -> Expected<Problem, std::string>;

/// Gold labels from `gold`, else `mcts_labels`; numeric 1 / 0 / -1.
auto gold_from_record(const nlohmann::json& record) -> std::optional<std::vector<Verdict>>;

auto labels_to_json(const std::vector<Verdict>& labels) -> nlohmann::json;
auto labels_from_json(const nlohmann::json& j) -> Expected<std::vector<Verdict>, std::string>;

/// Prediction line: {id, benchmark, gold, predicted, ...}.
auto eval_record_from_json(const nlohmann::json& j) -> Expected<metrics::EvalRecord, std::string>;

/// Writes to a sibling temp file and renames over `path`.
auto write_atomic(const std::filesystem::path& path, std::string_view content) -> std::optional<std::string>;

auto to_jsonl(const std::vector<nlohmann::json>& records) -> std::string;

} // namespace tim::dataset
