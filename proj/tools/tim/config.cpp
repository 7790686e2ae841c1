// SPDX-License-Identifier: Apache-2.0
#include "config.hpp"

#include <tim/backends.hpp>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

namespace tim::cli
{

namespace
{

auto interpolate_tree(nlohmann::json& node) -> std::optional<std::string>
{
    if (node.is_string())
    {
        auto value = interpolate_env(node.get<std::string>());
        if (!value)
            return value.error();
        node = *value;
    }
    else if (node.is_structured())
    {
        for (auto& child: node)
            if (auto error = interpolate_tree(child))
                return error;
    }
    return std::nullopt;
}

auto unknown_keys(const nlohmann::json& obj, std::set<std::string> const& allowed, std::string_view where)
    -> std::optional<std::string>
{
    for (auto const& [key, _]: obj.items())
        if (!allowed.contains(key))
            return "unknown key '" + key + "' in " + std::string(where);
    return std::nullopt;
}

auto seconds(double s) -> std::chrono::milliseconds
{
    return std::chrono::milliseconds(static_cast<long long>(s * 1000.0));
}

auto parse_backend(const nlohmann::json& j, BackendSpec& spec, std::string_view role) -> std::optional<std::string>
{
    if (!j.is_object())
        return "backends." + std::string(role) + " must be an object";
    if (auto bad = unknown_keys(j,
                                { "type", "base_url", "model", "auth_env", "max_in_flight", "timeout_s", "max_attempts",
                                  "initial_backoff_s", "requests_per_second", "burst", "continue_final_message",
                                  "replay_file" },
                                "backends." + std::string(role)))
        return bad;
    spec.type = j.value("type", spec.type);
    auto& r = spec.remote;
    r.base_url = j.value("base_url", r.base_url);
    r.model = j.value("model", r.model);
    r.api_key_env = j.value("auth_env", r.api_key_env);
    r.max_in_flight = j.value("max_in_flight", r.max_in_flight);
    if (j.contains("timeout_s"))
        r.timeout = seconds(j["timeout_s"].get<double>());
    r.max_attempts = j.value("max_attempts", r.max_attempts);
    if (j.contains("initial_backoff_s"))
        r.initial_backoff = seconds(j["initial_backoff_s"].get<double>());
    r.requests_per_second = j.value("requests_per_second", r.requests_per_second);
    r.burst = j.value("burst", r.burst);
    r.continue_final_message = j.value("continue_final_message", r.continue_final_message);
    if (j.contains("replay_file"))
        spec.replay_file = j["replay_file"].get<std::string>();

    static auto const types = std::set<std::string> { "remote", "replay", "oracle", "sycophant", "tool-grounded" };
    if (!types.contains(spec.type))
        return "backends." + std::string(role) + ".type '" + spec.type + "' is not one of remote, replay, oracle, "
               "sycophant, tool-grounded";
    if (spec.type == "remote" && r.model.empty())
        return "backends." + std::string(role) + " is remote but has no model";
    if (spec.type == "replay" && spec.replay_file.empty())
        return "backends." + std::string(role) + " is replay but has no replay_file";
    return std::nullopt;
}

} // namespace

auto interpolate_env(const std::string& text) -> Expected<std::string, std::string>
{
    auto out = std::string {};
    auto pos = std::size_t { 0 };
    while (pos < text.size())
    {
        auto const start = text.find("${", pos);
        if (start == std::string::npos)
        {
            out += text.substr(pos);
            break;
        }
        auto const end = text.find('}', start);
        if (end == std::string::npos)
            return unexpected("unterminated ${ in '" + text + "'");
        out += text.substr(pos, start - pos);
        auto const name = text.substr(start + 2, end - start - 2);
        auto const* value = std::getenv(name.c_str());
        if (!value)
            return unexpected("environment variable " + name + " is not set");
        out += value;
        pos = end + 1;
    }
    return out;
}

auto parse_config(const nlohmann::json& input) -> Expected<Config, std::string>
{
    if (!input.is_object())
        return unexpected(std::string("config must be a JSON object"));
    auto doc = input;
    if (auto error = interpolate_tree(doc))
        return unexpected(*error);
    if (auto bad = unknown_keys(doc, { "backends", "answerer_name", "limits", "thresholds", "weight",
                                       "allow_unit_weight", "workers", "paths", "synth" },
                                "config"))
        return unexpected(*bad);

    auto c = Config {};
    try
    {
        if (doc.contains("backends"))
        {
            auto const& b = doc["backends"];
            if (auto bad = unknown_keys(b, { "verifier", "answerer", "teacher" }, "backends"))
                return unexpected(*bad);
            for (auto [name, spec]: { std::pair { "verifier", &c.verifier }, std::pair { "answerer", &c.answerer },
                                      std::pair { "teacher", &c.teacher } })
                if (b.contains(name))
                    if (auto error = parse_backend(b[name], *spec, name))
                        return unexpected(*error);
        }
        if (doc.contains("answerer_name"))
            c.answerer_name = doc["answerer_name"].get<std::string>();
        if (doc.contains("limits"))
        {
            auto const& l = doc["limits"];
            if (auto bad = unknown_keys(l, { "max_tool_calls_per_paragraph", "max_total_generations", "tool_timeout_s",
                                             "allow_text_only" },
                                        "limits"))
                return unexpected(*bad);
            c.limits.max_tool_calls_per_paragraph =
                l.value("max_tool_calls_per_paragraph", c.limits.max_tool_calls_per_paragraph);
            if (l.contains("max_total_generations") && !l["max_total_generations"].is_null())
                c.limits.max_total_generations = l["max_total_generations"].get<std::size_t>();
            if (l.contains("tool_timeout_s"))
                c.limits.tool.timeout = seconds(l["tool_timeout_s"].get<double>());
            c.limits.allow_text_only = l.value("allow_text_only", false);
        }
        if (doc.contains("thresholds"))
        {
            auto const& t = doc["thresholds"];
            if (auto bad = unknown_keys(t, { "tau_correct", "tau_incorrect" }, "thresholds"))
                return unexpected(*bad);
            c.thresholds.tau_correct = t.value("tau_correct", c.thresholds.tau_correct);
            c.thresholds.tau_incorrect = t.value("tau_incorrect", c.thresholds.tau_incorrect);
        }
        c.weight.w = doc.value("weight", c.weight.w);
        c.weight.allow_non_upweight = doc.value("allow_unit_weight", false);
        c.workers = doc.value("workers", c.workers);
        if (doc.contains("paths"))
        {
            auto const& p = doc["paths"];
            if (auto bad = unknown_keys(p, { "dataset", "out" }, "paths"))
                return unexpected(*bad);
            if (p.contains("dataset"))
                c.dataset = p["dataset"].get<std::string>();
            if (p.contains("out"))
                c.out = p["out"].get<std::string>();
        }
        if (doc.contains("synth"))
        {
            auto const& s = doc["synth"];
            if (auto bad = unknown_keys(s, { "rows", "cols", "read_steps", "min_value", "max_value" }, "synth"))
                return unexpected(*bad);
            c.synth.rows = s.value("rows", c.synth.rows);
            c.synth.cols = s.value("cols", c.synth.cols);
            c.synth.read_steps = s.value("read_steps", c.synth.read_steps);
            c.synth.range.min = s.value("min_value", c.synth.range.min);
            c.synth.range.max = s.value("max_value", c.synth.range.max);
        }
    }
    catch (const nlohmann::json::exception& e)
    {
        return unexpected(std::string("config type error: ") + e.what());
    }

    if (c.thresholds.tau_incorrect >= c.thresholds.tau_correct)
        return unexpected(std::string("thresholds.tau_incorrect must be below tau_correct"));
    if (c.synth.rows == 0 || c.synth.cols == 0 || c.synth.cols > 26 || c.synth.range.min > c.synth.range.max
        || c.synth.range.min < 0)
        return unexpected(std::string("synth needs rows >= 1, 1 <= cols <= 26 and 0 <= min_value <= max_value"));
    return c;
}

auto load_config(const std::filesystem::path& path) -> Expected<Config, std::string>
{
    auto in = std::ifstream(path);
    if (!in)
        return unexpected("cannot open config " + path.string());
    auto buffer = std::stringstream {};
    buffer << in.rdbuf();
    auto doc = nlohmann::json::parse(buffer.str(), nullptr, false);
    if (doc.is_discarded())
        return unexpected("config " + path.string() + " is not valid JSON");
    return parse_config(doc);
}

auto make_backend(const BackendSpec& spec, std::string_view role) -> Expected<std::unique_ptr<Backend>, std::string>
{
    auto const id = std::string(role);
    if (spec.type == "remote")
        return std::unique_ptr<Backend>(std::make_unique<RemoteBackend>(id, spec.remote));
    if (spec.type == "replay")
    {
        auto replay = ReplayBackend::load(id, spec.replay_file);
        if (!replay)
            return unexpected(replay.error());
        return std::unique_ptr<Backend>(std::make_unique<ReplayBackend>(std::move(*replay)));
    }
    if (spec.type == "oracle")
        return std::unique_ptr<Backend>(std::make_unique<OracleAnswerer>());
    if (spec.type == "sycophant")
        return std::unique_ptr<Backend>(std::make_unique<SycophantBackend>());
    if (spec.type == "tool-grounded")
        return std::unique_ptr<Backend>(std::make_unique<synth::ToolGroundedPolicy>());
    return unexpected("unknown backend type '" + spec.type + "'");
}

auto required_paths(const BackendSpec& spec) -> std::vector<std::filesystem::path>
{
    if (spec.type == "replay")
        return { spec.replay_file };
    return {};
}

} // namespace tim::cli
