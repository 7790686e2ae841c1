// SPDX-License-Identifier: Apache-2.0
#include <tim/dataset.hpp>
#include <tim/text.hpp>

#include <fstream>
#include <unistd.h>

namespace tim::dataset
{

auto read_jsonl(const std::filesystem::path& path) -> Expected<JsonlFile, std::string>
{
    auto in = std::ifstream(path);
    if (!in)
        return unexpected("cannot open " + path.string());
    auto file = JsonlFile {};
    auto line = std::string {};
    for (auto number = std::size_t { 1 }; std::getline(in, line); ++number)
    {
        if (text::trim(line).empty())
            continue;
        auto value = nlohmann::json::parse(line, nullptr, false);
        if (value.is_discarded())
            file.errors.push_back({ number, "invalid JSON" });
        else if (!value.is_object())
            file.errors.push_back({ number, "record is not an object" });
        else
            file.lines.push_back({ number, std::move(value) });
    }
    return file;
}

auto problem_from_record(const nlohmann::json& record) -> Expected<Problem, std::string>
{
    auto problem = Problem {};
    if (!record.contains("id") || !(record["id"].is_string() || record["id"].is_number_integer()))
        return unexpected(std::string("missing or non-string 'id'"));
    problem.id = record["id"].is_string() ? record["id"].get<std::string>() : record["id"].dump();

    if (!record.contains("question") || !record["question"].is_string())
        return unexpected(std::string("missing or non-string 'question'"));
    problem.question = record["question"].get<std::string>();

    if (!record.contains("steps") || !record["steps"].is_array() || record["steps"].empty())
        return unexpected(std::string("'steps' must be a non-empty array"));
    for (auto const& s: record["steps"])
    {
        if (!s.is_string())
            return unexpected(std::string("'steps' entries must be strings"));
        problem.steps.push_back(s.get<std::string>());
    }

    if (record.contains("images"))
    {
        if (!record["images"].is_array())
            return unexpected(std::string("'images' must be an array"));
        for (auto const& i: record["images"])
        {
            if (!i.is_string())
                return unexpected(std::string("'images' entries must be strings"));
            problem.images.push_back(ImageRef { .source = i.get<std::string>() });
        }
    }

    if (record.contains("scene") && !record["scene"].is_null())
    {
        auto scene = scene_from_json(record["scene"]);
        if (!scene)
            return unexpected(scene.error());
        auto shared = std::make_shared<const Scene>(std::move(*scene));
        if (problem.images.empty())
            problem.images.push_back(ImageRef { .scene = shared });
        else
            problem.images.front().scene = shared;
    }
    return problem;
}

auto labels_to_json(const std::vector<Verdict>& labels) -> nlohmann::json
{
    auto out = nlohmann::json::array();
    for (auto v: labels)
        out.push_back(to_numeric(v));
    return out;
}

auto labels_from_json(const nlohmann::json& j) -> Expected<std::vector<Verdict>, std::string>
{
    if (!j.is_array())
        return unexpected(std::string("labels must be an array"));
    auto out = std::vector<Verdict> {};
    for (auto const& v: j)
    {
        auto verdict = std::optional<Verdict> {};
        if (v.is_number_integer())
            verdict = verdict_from_numeric(v.get<long long>());
        else if (v.is_string())
            verdict = parse_verdict(v.get<std::string>());
        if (!verdict)
            return unexpected("bad label " + v.dump() + " (want 1, 0, -1 or a verdict name)");
        out.push_back(*verdict);
    }
    return out;
}

auto gold_from_record(const nlohmann::json& record) -> std::optional<std::vector<Verdict>>
{
    for (auto key: { "gold", "mcts_labels" })
        if (record.contains(key))
            if (auto labels = labels_from_json(record[key]))
                return *labels;
    return std::nullopt;
}

auto eval_record_from_json(const nlohmann::json& j) -> Expected<metrics::EvalRecord, std::string>
{
    auto r = metrics::EvalRecord {};
    if (!j.contains("id") || !j["id"].is_string())
        return unexpected(std::string("missing or non-string 'id'"));
    r.id = j["id"].get<std::string>();
    if (!j.contains("benchmark") || !j["benchmark"].is_string())
        return unexpected(std::string("missing or non-string 'benchmark'"));
    r.benchmark = j["benchmark"].get<std::string>();
    for (auto [key, target]: { std::pair { "gold", &r.gold }, std::pair { "predicted", &r.predicted } })
    {
        if (!j.contains(key))
            return unexpected(std::string("missing '") + key + "'");
        auto labels = labels_from_json(j[key]);
        if (!labels)
            return unexpected(std::string("'") + key + "': " + labels.error());
        *target = std::move(*labels);
    }
    return r;
}

auto write_atomic(const std::filesystem::path& path, std::string_view content) -> std::optional<std::string>
{
    auto tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        auto out = std::ofstream(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            return "cannot write " + tmp.string();
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out)
        {
            std::filesystem::remove(tmp);
            return "write failed for " + tmp.string();
        }
    }
    auto ec = std::error_code {};
    std::filesystem::rename(tmp, path, ec);
    if (ec)
    {
        std::filesystem::remove(tmp);
        return "cannot rename onto " + path.string() + ": " + ec.message();
    }
    return std::nullopt;
}

auto to_jsonl(const std::vector<nlohmann::json>& records) -> std::string
{
    auto out = std::string {};
    for (auto const& r: records)
        out += r.dump() + "\n";
    return out;
}

} // namespace tim::dataset
