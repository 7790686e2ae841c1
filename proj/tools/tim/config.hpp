// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/backend.hpp>
#include <tim/curation.hpp>
#include <tim/engine.hpp>
#include <tim/expected.hpp>
#include <tim/remote.hpp>
#include <tim/synthetic.hpp>

#include <json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace tim::cli
{

/// One backend role. `type` is remote, replay, oracle, sycophant or
/// tool-grounded.
struct BackendSpec
{
    std::string type;
    RemoteConfig remote;
    std::filesystem::path replay_file;
};

struct Config
{
    BackendSpec verifier { .type = "tool-grounded" };
    BackendSpec answerer { .type = "oracle" };
    BackendSpec teacher { .type = "tool-grounded" };
    std::optional<std::string> answerer_name;

    EngineLimits limits;
    curation::Thresholds thresholds;
    curation::WeightPolicy weight;
    synth::ProblemConfig synth;

    std::size_t workers = 4;
    std::optional<std::filesystem::path> dataset;
    std::optional<std::filesystem::path> out;
};

/// Replaces ${NAME} with the environment value; unset variables are errors.
auto interpolate_env(const std::string& text) -> Expected<std::string, std::string>;

/// Parses a config document (after interpolation). Unknown keys are errors.
auto parse_config(const nlohmann::json& doc) -> Expected<Config, std::string>;

auto load_config(const std::filesystem::path& path) -> Expected<Config, std::string>;

auto make_backend(const BackendSpec& spec, std::string_view role) -> Expected<std::unique_ptr<Backend>, std::string>;

/// Paths a backend needs at start (replay files).
auto required_paths(const BackendSpec& spec) -> std::vector<std::filesystem::path>;

} // namespace tim::cli
