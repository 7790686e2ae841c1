// SPDX-License-Identifier: Apache-2.0
#include <tim/scene.hpp>

#include <climits>
#include <set>
#include <sstream>

namespace tim
{

namespace
{

auto unique_names(const std::vector<std::string>& names) -> bool
{
    return std::set<std::string>(names.begin(), names.end()).size() == names.size();
}

auto xml_escape(const std::string& s) -> std::string
{
    auto out = std::string {};
    for (char c: s)
    {
        switch (c)
        {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

auto validate_scene(const Scene& scene, ValueRange range) -> std::string
{
    if (scene.kind == SceneKind::ValueGrid)
    {
        auto const& g = scene.grid;
        if (g.rows.empty() || g.columns.empty())
            return "value grid needs at least one row and one column";
        if (!unique_names(g.rows) || !unique_names(g.columns))
            return "row and column names must be unique";
        if (g.values.size() != g.rows.size())
            return "value grid row count mismatch";
        for (auto const& row: g.values)
        {
            if (row.size() != g.columns.size())
                return "value grid column count mismatch";
            for (auto v: row)
                if (v < range.min || v > range.max)
                    return "cell value " + std::to_string(v) + " outside configured range";
        }
        return {};
    }

    auto names = std::vector<std::string> {};
    for (auto const& e: scene.shapes)
        names.push_back(e.name);
    if (names.empty())
        return "shape set needs at least one entity";
    if (!unique_names(names))
        return "entity names must be unique";
    return {};
}

auto scene_to_json(const Scene& scene) -> nlohmann::json
{
    if (scene.kind == SceneKind::ValueGrid)
        return {
            { "kind", "value_grid" },
            { "rows", scene.grid.rows },
            { "columns", scene.grid.columns },
            { "values", scene.grid.values },
        };
    auto entities = nlohmann::json::array();
    for (auto const& e: scene.shapes)
        entities.push_back({ { "name", e.name }, { "attributes", e.attributes } });
    return { { "kind", "shape_set" }, { "entities", entities } };
}

auto scene_from_json(const nlohmann::json& j) -> Expected<Scene, std::string>
{
    try
    {
        auto scene = Scene {};
        auto const kind = j.at("kind").get<std::string>();
        if (kind == "value_grid")
        {
            scene.kind = SceneKind::ValueGrid;
            scene.grid.rows = j.at("rows").get<std::vector<std::string>>();
            scene.grid.columns = j.at("columns").get<std::vector<std::string>>();
            scene.grid.values = j.at("values").get<std::vector<std::vector<long long>>>();
        }
        else if (kind == "shape_set")
        {
            scene.kind = SceneKind::ShapeSet;
            for (auto const& e: j.at("entities"))
                scene.shapes.push_back({ e.at("name").get<std::string>(),
                                         e.at("attributes").get<std::map<std::string, std::string>>() });
        }
        else
            return unexpected(std::string("unknown scene kind '") + kind + "'");
        if (auto problem = validate_scene(scene, { .min = LLONG_MIN, .max = LLONG_MAX }); !problem.empty())
            return unexpected(problem);
        return scene;
    }
    catch (const nlohmann::json::exception& e)
    {
        return unexpected(std::string("malformed scene: ") + e.what());
    }
}

auto render_scene_svg(const Scene& scene) -> std::string
{
    constexpr auto CellW = 90;
    constexpr auto CellH = 28;
    auto out = std::ostringstream {};

    if (scene.kind == SceneKind::ValueGrid)
    {
        auto const& g = scene.grid;
        auto const width = CellW * static_cast<int>(g.columns.size() + 1);
        auto const height = CellH * static_cast<int>(g.rows.size() + 1);
        out << R"(<svg xmlns="http://www.w3.org/2000/svg" width=")" << width << R"(" height=")" << height << "\">";
        out << R"(<rect width="100%" height="100%" fill="white"/>)";
        auto const cell = [&](int col, int row, const std::string& label) {
            out << "<rect x=\"" << col * CellW << "\" y=\"" << row * CellH << "\" width=\"" << CellW << "\" height=\""
                << CellH << R"(" fill="none" stroke="black"/>)";
            out << "<text x=\"" << col * CellW + 6 << "\" y=\"" << row * CellH + 19
                << R"(" font-family="sans-serif" font-size="13">)" << xml_escape(label) << "</text>";
        };
        for (auto c = std::size_t { 0 }; c < g.columns.size(); ++c)
            cell(static_cast<int>(c) + 1, 0, g.columns[c]);
        for (auto r = std::size_t { 0 }; r < g.rows.size(); ++r)
        {
            cell(0, static_cast<int>(r) + 1, g.rows[r]);
            for (auto c = std::size_t { 0 }; c < g.columns.size(); ++c)
                cell(static_cast<int>(c) + 1, static_cast<int>(r) + 1, std::to_string(g.values[r][c]));
        }
        out << "</svg>";
        return out.str();
    }

    auto const height = CellH * static_cast<int>(scene.shapes.size() + 1);
    out << R"(<svg xmlns="http://www.w3.org/2000/svg" width="480" height=")" << height << "\">";
    out << R"(<rect width="100%" height="100%" fill="white"/>)";
    auto row = 1;
    for (auto const& e: scene.shapes)
    {
        auto line = e.name + ":";
        for (auto const& [k, v]: e.attributes)
            line += " " + k + "=" + v;
        out << "<text x=\"6\" y=\"" << row * CellH << R"(" font-family="sans-serif" font-size="13">)" << xml_escape(line)
            << "</text>";
        ++row;
    }
    out << "</svg>";
    return out.str();
}

} // namespace tim
