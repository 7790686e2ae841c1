// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/expected.hpp>

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace tim
{

/// Structured stand-in for an image: the ground truth an ideal vision model
/// would read off the picture.
enum class SceneKind
{
    ValueGrid,
    ShapeSet,
};

struct ValueGrid
{
    std::vector<std::string> rows;
    std::vector<std::string> columns;
    std::vector<std::vector<long long>> values; // values[row][column]

    auto operator==(const ValueGrid&) const -> bool = default;
};

struct ShapeEntity
{
    std::string name;
    std::map<std::string, std::string> attributes;

    auto operator==(const ShapeEntity&) const -> bool = default;
};

struct Scene
{
    SceneKind kind = SceneKind::ValueGrid;
    ValueGrid grid;
    std::vector<ShapeEntity> shapes;

    auto operator==(const Scene&) const -> bool = default;
};

struct ValueRange
{
    long long min = 1;
    long long max = 999;
};

/// Empty string when well-formed, otherwise the first problem found.
auto validate_scene(const Scene& scene, ValueRange range = {}) -> std::string;

auto scene_to_json(const Scene& scene) -> nlohmann::json;
auto scene_from_json(const nlohmann::json& j) -> Expected<Scene, std::string>;

/// Deterministic SVG rendering, used when a scene has to be shown to a
/// remote vision model.
auto render_scene_svg(const Scene& scene) -> std::string;

} // namespace tim
