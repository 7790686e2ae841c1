// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"
#include "config.hpp"

#include <tim/dataset.hpp>
#include <tim/metrics.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace tim::cli
{

namespace
{

class Log
{
  public:
    explicit Log(std::ostream& stream): _stream(stream) {}

    void event(std::string_view level, std::string_view name, nlohmann::json fields = nlohmann::json::object())
    {
        fields["level"] = level;
        fields["event"] = name;
        auto lock = std::lock_guard(_mutex);
        _stream << fields.dump() << "\n";
    }

    void info(std::string_view name, nlohmann::json fields = nlohmann::json::object()) { event("info", name, std::move(fields)); }
    void warn(std::string_view name, nlohmann::json fields = nlohmann::json::object()) { event("warn", name, std::move(fields)); }
    void error(std::string_view name, nlohmann::json fields = nlohmann::json::object()) { event("error", name, std::move(fields)); }

  private:
    std::ostream& _stream;
    std::mutex _mutex;
};

struct Options
{
    std::string config;
    std::string dataset;
    std::string out;
    std::uint64_t seed = 0;
    std::size_t count = 0;
    std::optional<double> weight;
    std::optional<double> tau_correct;
    std::optional<double> tau_incorrect;
    std::optional<std::size_t> max_in_flight;
    bool dry_run = false;
    std::string mix;
    bool allow_unit_weight = false;
    bool allow_text_only = false;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads; stops handing
/// out work once interrupted. Returns which indices ran.
auto run_pool(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) -> std::vector<bool>
{
    auto done = std::vector<char>(n, 0);
    auto next = std::atomic<std::size_t> { 0 };
    auto const body = [&] {
        for (;;)
        {
            if (interrupt_flag().load())
                return;
            auto const i = next.fetch_add(1);
            if (i >= n)
                return;
            fn(i);
            done[i] = 1;
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    auto threads = std::vector<std::thread> {};
    for (auto t = std::size_t { 1 }; t < workers; ++t)
        threads.emplace_back(body);
    body();
    for (auto& t: threads)
        t.join();
    return { done.begin(), done.end() };
}

auto truncation_marker(std::size_t completed, std::size_t total) -> nlohmann::json
{
    return { { "truncated", true }, { "completed", completed }, { "total", total } };
}

auto resolve(Options const& o, Log& log) -> std::optional<Config>
{
    auto config = Config {};
    if (!o.config.empty())
    {
        auto loaded = load_config(o.config);
        if (!loaded)
        {
            log.error("config_error", { { "message", loaded.error() } });
            return std::nullopt;
        }
        config = std::move(*loaded);
    }
    if (!o.dataset.empty())
        config.dataset = o.dataset;
    if (!o.out.empty())
        config.out = o.out;
    if (o.weight)
        config.weight.w = *o.weight;
    if (o.allow_unit_weight)
        config.weight.allow_non_upweight = true;
    if (o.tau_correct)
        config.thresholds.tau_correct = *o.tau_correct;
    if (o.tau_incorrect)
        config.thresholds.tau_incorrect = *o.tau_incorrect;
    if (o.max_in_flight)
    {
        config.workers = *o.max_in_flight;
        for (auto* spec: { &config.verifier, &config.answerer, &config.teacher })
            spec->remote.max_in_flight = *o.max_in_flight;
    }
    if (o.allow_text_only)
        config.limits.allow_text_only = true;
    if (config.thresholds.tau_incorrect >= config.thresholds.tau_correct)
    {
        log.error("config_error", { { "message", "tau_incorrect must be below tau_correct" } });
        return std::nullopt;
    }
    if (config.workers == 0)
    {
        log.error("config_error", { { "message", "max-in-flight must be positive" } });
        return std::nullopt;
    }
    return config;
}

auto check_inputs(const std::vector<std::filesystem::path>& paths, Log& log) -> bool
{
    for (auto const& p: paths)
    {
        if (!std::filesystem::exists(p))
        {
            log.error("missing_path", { { "path", p.string() } });
            return false;
        }
    }
    return true;
}

auto load_lines(const std::filesystem::path& path, Log& log) -> std::optional<dataset::JsonlFile>
{
    auto file = dataset::read_jsonl(path);
    if (!file)
    {
        log.error("io_error", { { "message", file.error() } });
        return std::nullopt;
    }
    return std::move(*file);
}

auto write_output(const std::filesystem::path& path, std::string_view content, Log& log) -> bool
{
    if (auto error = dataset::write_atomic(path, content))
    {
        log.error("io_error", { { "message", *error } });
        return false;
    }
    return true;
}

auto benchmark_of(const nlohmann::json& record) -> std::string
{
    if (record.contains("benchmark") && record["benchmark"].is_string())
        return record["benchmark"].get<std::string>();
    return "unknown";
}

auto violations_json(const std::vector<FormatError>& violations) -> nlohmann::json
{
    auto out = nlohmann::json::array();
    for (auto const& v: violations)
        out.push_back({ { "kind", to_string(v.kind) }, { "detail", v.detail } });
    return out;
}

auto answerer_label(const Config& c, const Backend& answerer) -> std::string
{
    if (c.answerer_name)
        return *c.answerer_name;
    if (c.answerer.type == "remote")
        return c.answerer.remote.model;
    return answerer.id();
}

// ---- verify -------------------------------------------------------------

auto cmd_verify(const Options& o, std::ostream& out, Log& log) -> int
{
    auto config = resolve(o, log);
    if (!config)
        return Fatal;
    if (!config->dataset)
    {
        log.error("config_error", { { "message", "verify needs --dataset" } });
        return Fatal;
    }
    if (!o.dry_run && !config->out)
    {
        log.error("config_error", { { "message", "verify needs --out" } });
        return Fatal;
    }
    auto required = std::vector<std::filesystem::path> { *config->dataset };
    for (auto const* spec: { &config->verifier, &config->answerer })
        for (auto const& p: required_paths(*spec))
            required.push_back(p);
    if (!check_inputs(required, log))
        return Fatal;

    auto file = load_lines(*config->dataset, log);
    if (!file)
        return Fatal;
    auto verifier = make_backend(config->verifier, "verifier");
    auto answerer = make_backend(config->answerer, "answerer");
    for (auto const* b: { &verifier, &answerer })
    {
        if (!*b)
        {
            log.error("config_error", { { "message", b->error() } });
            return Fatal;
        }
    }
    auto limits = config->limits;
    limits.answerer_name = answerer_label(*config, **answerer);

    auto failures = std::atomic<std::size_t> { file->errors.size() };
    for (auto const& e: file->errors)
        log.error("record_error", { { "line", e.number }, { "message", e.message } });

    if (o.dry_run)
    {
        for (auto const& line: file->lines)
        {
            auto problem = dataset::problem_from_record(line.value);
            if (!problem)
                continue;
            auto const prompt = build_prompt(*problem, default_tool_registry(), *limits.answerer_name);
            for (auto const& m: prompt.messages)
                out << "[" << to_string(m.role) << "]\n" << m.text << "\n\n";
            return Success;
        }
        log.error("no_valid_records", { { "path", config->dataset->string() } });
        return Fatal;
    }

    auto const n = file->lines.size();
    auto results = std::vector<nlohmann::json>(n);
    auto const workers = std::min({ config->workers, (*verifier)->max_in_flight(), (*answerer)->max_in_flight() });
    auto const ran = run_pool(n, workers, [&](std::size_t i) {
        auto const& line = file->lines[i];
        auto record = nlohmann::json::object();
        auto problem = dataset::problem_from_record(line.value);
        if (!problem)
        {
            ++failures;
            log.error("record_error", { { "line", line.number }, { "message", problem.error() } });
            record = { { "line", line.number }, { "status", "invalid_record" }, { "error", problem.error() } };
            results[i] = std::move(record);
            return;
        }
        record["id"] = problem->id;
        record["benchmark"] = benchmark_of(line.value);
        if (auto gold = dataset::gold_from_record(line.value))
            record["gold"] = dataset::labels_to_json(*gold);

        auto run = verify_solution(*problem, **verifier, **answerer, limits);
        if (run)
        {
            record["predicted"] = dataset::labels_to_json(run->verdicts);
            record["tool_calls"] = run->tool_calls;
            record["transcript"] = run->transcript;
            record["status"] = "ok";
            log.info("verified", { { "id", problem->id }, { "generations", run->generations } });
        }
        else
        {
            ++failures;
            auto const& e = run.error();
            record["predicted"] = dataset::labels_to_json(labels_for_scoring(e, problem->steps.size()));
            record["tool_calls"] = e.tool_calls;
            record["transcript"] = e.transcript;
            record["status"] = to_string(e.kind);
            record["error"] = { { "message", e.message }, { "violations", violations_json(e.violations) } };
            log.error("verify_failed", { { "id", problem->id }, { "kind", to_string(e.kind) }, { "message", e.message } });
        }
        results[i] = std::move(record);
    });

    auto lines = std::vector<nlohmann::json> {};
    for (auto i = std::size_t { 0 }; i < n; ++i)
        if (ran[i] && results[i].contains("predicted"))
            lines.push_back(results[i]);
    auto const completed = static_cast<std::size_t>(std::count(ran.begin(), ran.end(), true));
    auto const truncated = completed < n;
    if (truncated)
    {
        lines.push_back(truncation_marker(completed, n));
        log.warn("interrupted", { { "completed", completed }, { "total", n } });
    }
    if (!write_output(*config->out, dataset::to_jsonl(lines), log))
        return Fatal;
    log.info("verify_done", { { "records", n }, { "failures", failures.load() }, { "out", config->out->string() } });
    out << "verified " << completed << " of " << n << " records, " << failures.load() << " failed\n";
    return failures.load() > 0 || truncated ? PartialFailure : Success;
}

// ---- evaluate -----------------------------------------------------------

auto cmd_evaluate(const Options& o, std::ostream& out, Log& log) -> int
{
    auto config = resolve(o, log);
    if (!config)
        return Fatal;
    if (!config->dataset)
    {
        log.error("config_error", { { "message", "evaluate needs --dataset (a prediction file)" } });
        return Fatal;
    }
    if (!check_inputs({ *config->dataset }, log))
        return Fatal;
    auto file = load_lines(*config->dataset, log);
    if (!file)
        return Fatal;

    auto errors = std::vector<std::pair<std::size_t, std::string>> {};
    for (auto const& e: file->errors)
        errors.emplace_back(e.number, e.message);
    auto records = std::vector<metrics::EvalRecord> {};
    for (auto const& line: file->lines)
    {
        if (line.value.value("truncated", false))
        {
            log.warn("truncated_input", { { "line", line.number } });
            continue;
        }
        auto r = dataset::eval_record_from_json(line.value);
        if (!r)
            errors.emplace_back(line.number, r.error());
        else
            records.push_back(std::move(*r));
    }
    if (!errors.empty())
    {
        std::sort(errors.begin(), errors.end());
        for (auto const& [number, message]: errors)
        {
            out << config->dataset->string() << ":" << number << ": " << message << "\n";
            log.error("schema_error", { { "line", number }, { "message", message } });
        }
        return Fatal;
    }
    if (records.empty())
    {
        out << config->dataset->string() << ": no prediction records\n";
        log.error("empty_input", { { "path", config->dataset->string() } });
        return Fatal;
    }

    auto const macro = metrics::macro_f1(records);
    auto const fisi = metrics::fisi_f1(records);
    for (auto const* report: { &macro, &fisi })
        for (auto const& w: report->warnings)
            log.warn("metric_warning", { { "metric", report->metric }, { "message", w } });

    auto table = std::ostringstream {};
    table << std::left << std::setw(30) << "Benchmark" << std::right << std::setw(10) << "Macro F1" << std::setw(10)
          << "FISI F1" << std::setw(10) << "Records" << "\n";
    for (auto const& name: metrics::ordered_benchmarks(macro))
    {
        auto const& m = macro.per_benchmark.at(name);
        auto const it = fisi.per_benchmark.find(name);
        table << std::left << std::setw(30) << name << std::right << std::setw(10) << metrics::percent(m.value)
              << std::setw(10) << (it == fisi.per_benchmark.end() ? "-" : metrics::percent(it->second.value))
              << std::setw(10) << m.records << "\n";
    }
    table << std::left << std::setw(30) << "Overall (pooled steps)" << std::right << std::setw(10)
          << metrics::percent(macro.overall.value) << std::setw(10) << metrics::percent(fisi.overall.value)
          << std::setw(10) << macro.overall.records << "\n";
    table << std::left << std::setw(30) << "Overall (mean of benchmarks)" << std::right << std::setw(10)
          << metrics::percent(macro.overall_benchmark_mean) << std::setw(10)
          << metrics::percent(fisi.overall_benchmark_mean) << std::setw(10) << "" << "\n";
    out << table.str();

    if (config->out)
    {
        auto const report = nlohmann::json { { "macro_f1", metrics::to_json(macro) }, { "fisi_f1", metrics::to_json(fisi) } };
        if (!write_output(*config->out, report.dump(2) + "\n", log))
            return Fatal;
    }
    return macro.excluded.empty() ? Success : PartialFailure;
}

// ---- curate -------------------------------------------------------------

struct CurateOutcome
{
    std::optional<curation::RawSample> sample;
    std::optional<curation::Candidate> kept;
    std::optional<curation::Drop> drop;
    std::optional<curation::FirstErrorObservation> observation;
    bool failed = false;
};

auto cmd_curate(const Options& o, std::ostream& out, Log& log) -> int
{
    auto config = resolve(o, log);
    if (!config)
        return Fatal;
    auto weight_warnings = std::vector<std::string> {};
    if (auto error = curation::check_weight(config->weight, weight_warnings))
    {
        log.error("config_error", { { "kind", curation::to_string(error->kind) }, { "message", error->detail } });
        return Fatal;
    }
    for (auto const& w: weight_warnings)
        log.warn("weight_override", { { "message", w } });
    if (!config->dataset || !config->out)
    {
        log.error("config_error", { { "message", "curate needs --dataset and --out" } });
        return Fatal;
    }
    auto required = std::vector<std::filesystem::path> { *config->dataset };
    for (auto const* spec: { &config->teacher, &config->answerer })
        for (auto const& p: required_paths(*spec))
            required.push_back(p);
    if (!check_inputs(required, log))
        return Fatal;
    auto file = load_lines(*config->dataset, log);
    if (!file)
        return Fatal;

    auto teacher = make_backend(config->teacher, "teacher");
    auto answerer = make_backend(config->answerer, "answerer");
    for (auto const* b: { &teacher, &answerer })
    {
        if (!*b)
        {
            log.error("config_error", { { "message", b->error() } });
            return Fatal;
        }
    }
    auto limits = config->limits;
    limits.answerer_name = answerer_label(*config, **answerer);

    auto failures = std::atomic<std::size_t> { file->errors.size() };
    for (auto const& e: file->errors)
        log.error("record_error", { { "line", e.number }, { "message", e.message } });

    auto const n = file->lines.size();
    auto outcomes = std::vector<CurateOutcome>(n);
    auto const workers = std::min({ config->workers, (*teacher)->max_in_flight(), (*answerer)->max_in_flight() });
    auto const ran = run_pool(n, workers, [&](std::size_t i) {
        auto const& line = file->lines[i];
        auto& result = outcomes[i];
        auto sample = curation::sample_from_json(line.value);
        if (!sample)
        {
            ++failures;
            result.failed = true;
            log.error("record_error", { { "line", line.number }, { "message", sample.error() } });
            return;
        }
        result.sample = *sample;

        auto transcript = sample->transcript.value_or("");
        if (!sample->transcript)
        {
            auto problem = dataset::problem_from_record(line.value);
            auto run = verify_solution(*problem, **teacher, **answerer, limits);
            if (run)
                transcript = run->transcript;
            else if (run.error().kind == EngineErrorKind::FormatInvalid
                     || run.error().kind == EngineErrorKind::BudgetExceeded)
                transcript = run.error().transcript;
            else
            {
                ++failures;
                result.failed = true;
                log.error("teacher_failed", { { "id", sample->id }, { "message", run.error().message } });
                result.drop = curation::Drop { sample->id, "teacher_error", run.error().message };
                return;
            }
        }

        auto candidate = curation::format_filter(*sample, transcript);
        if (!candidate)
        {
            result.drop = candidate.error();
            return;
        }
        auto decision = curation::consensus_filter(*candidate, config->thresholds);
        if (!decision)
        {
            ++failures;
            result.failed = true;
            result.drop = curation::Drop { sample->id, std::string(curation::to_string(decision.error().kind)),
                                           decision.error().detail };
            log.error("consensus_error", { { "id", sample->id }, { "kind", result.drop->reason } });
            return;
        }
        result.observation = curation::FirstErrorObservation {
            .id = sample->id,
            .mcts = decision->mcts_first_error ? static_cast<long long>(*decision->mcts_first_error) : -1,
            .teacher = decision->teacher_first_error ? static_cast<long long>(*decision->teacher_first_error) : -1,
            .kept = decision->keep,
        };
        if (decision->keep)
            result.kept = std::move(*candidate);
        else
            result.drop = decision->drop;
    });

    auto kept = std::vector<curation::Candidate> {};
    auto drops = std::vector<curation::Drop> {};
    auto observations = std::vector<curation::FirstErrorObservation> {};
    for (auto i = std::size_t { 0 }; i < n; ++i)
    {
        if (!ran[i])
            continue;
        auto& r = outcomes[i];
        if (r.kept)
            kept.push_back(std::move(*r.kept));
        if (r.drop)
            drops.push_back(*r.drop);
        if (r.observation)
            observations.push_back(*r.observation);
    }
    for (auto const& d: drops)
        log.info("dropped", { { "id", d.id }, { "reason", d.reason }, { "detail", d.detail } });

    auto weighted = curation::partition_and_weight(std::move(kept), config->weight);
    if (!weighted)
    {
        log.error("config_error", { { "message", weighted.error().detail } });
        return Fatal;
    }

    auto lines = std::vector<nlohmann::json> {};
    auto dplus = std::size_t { 0 };
    for (auto const& s: weighted->samples)
    {
        auto problem = dataset::problem_from_record(s.candidate.sample.record);
        lines.push_back(curation::curated_record(s, build_prompt(*problem, default_tool_registry(), *limits.answerer_name)));
        dplus += s.partition == curation::Partition::DPlus ? 1 : 0;
    }
    auto const completed = static_cast<std::size_t>(std::count(ran.begin(), ran.end(), true));
    auto const truncated = completed < n;
    if (truncated)
    {
        lines.push_back(truncation_marker(completed, n));
        log.warn("interrupted", { { "completed", completed }, { "total", n } });
    }

    auto reasons = std::map<std::string, std::size_t> {};
    auto dropped = nlohmann::json::array();
    for (auto const& d: drops)
    {
        ++reasons[d.reason];
        dropped.push_back({ { "id", d.id }, { "reason", d.reason }, { "detail", d.detail } });
    }
    auto const total = n + file->errors.size();
    auto const pass_rate = total == 0 ? 0.0 : static_cast<double>(weighted->samples.size()) / static_cast<double>(total);
    auto const analysis = curation::analyze_first_error_distribution(observations);
    auto const report = nlohmann::json {
        { "total", total },
        { "kept", weighted->samples.size() },
        { "pass_rate", pass_rate },
        { "drop_reasons", reasons },
        { "dropped", dropped },
        { "partitions", { { "D+", dplus }, { "D-", weighted->samples.size() - dplus } } },
        { "weight", config->weight.w },
        { "thresholds", { { "tau_correct", config->thresholds.tau_correct }, { "tau_incorrect", config->thresholds.tau_incorrect } } },
        { "first_error_analysis", curation::to_json(analysis) },
        { "truncated", truncated },
    };

    auto report_path = *config->out;
    report_path += ".report.json";
    auto plot_path = *config->out;
    plot_path += ".first_error.svg";
    if (!write_output(*config->out, dataset::to_jsonl(lines), log) || !write_output(report_path, report.dump(2) + "\n", log)
        || !write_output(plot_path, curation::render_svg(analysis), log))
        return Fatal;

    out << "pass rate: " << metrics::percent(pass_rate) << "% (" << weighted->samples.size() << " of " << total
        << " kept)\n";
    for (auto const& [reason, count]: reasons)
        out << "  dropped " << reason << ": " << count << "\n";
    return failures.load() > 0 || truncated ? PartialFailure : Success;
}

// ---- synth --------------------------------------------------------------

auto derive_seed(std::uint64_t seed, std::uint64_t index) -> std::uint64_t
{
    auto z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

auto parse_mix(const std::string& text) -> Expected<std::vector<double>, std::string>
{
    auto fractions = std::vector<double>(3, 0.0);
    if (text.empty())
        return fractions;
    auto stream = std::stringstream(text);
    auto item = std::string {};
    while (std::getline(stream, item, ','))
    {
        auto const eq = item.find('=');
        if (eq == std::string::npos)
            return unexpected("mix entry '" + item + "' is not kind=fraction");
        auto const kind = synth::parse_injection_kind(item.substr(0, eq));
        if (!kind)
            return unexpected("unknown injection kind '" + item.substr(0, eq) + "'");
        char* end = nullptr;
        auto const value = std::strtod(item.c_str() + eq + 1, &end);
        if (end == item.c_str() + eq + 1 || *end != '\0' || !std::isfinite(value) || value < 0.0)
            return unexpected("mix fraction '" + item.substr(eq + 1) + "' is not a non-negative number");
        fractions[static_cast<std::size_t>(*kind)] = value;
    }
    auto const sum = std::accumulate(fractions.begin(), fractions.end(), 0.0);
    if (sum > 1.0 + 1e-9)
        return unexpected("mix fractions sum to " + std::to_string(sum) + ", more than 1");
    return fractions;
}

auto cmd_synth(const Options& o, std::ostream& out, Log& log) -> int
{
    auto config = resolve(o, log);
    if (!config)
        return Fatal;
    if (o.count == 0)
    {
        log.error("config_error", { { "message", "--count must be positive" } });
        return Fatal;
    }
    if (!config->out)
    {
        log.error("config_error", { { "message", "synth needs --out" } });
        return Fatal;
    }
    auto mix = parse_mix(o.mix);
    if (!mix)
    {
        log.error("config_error", { { "message", mix.error() } });
        return Fatal;
    }
    auto const quotas = apportion(o.count, *mix);

    auto kinds = std::vector<std::optional<synth::InjectionKind>> {};
    for (auto k = std::size_t { 0 }; k < quotas.size(); ++k)
        for (auto i = std::size_t { 0 }; i < quotas[k]; ++i)
            kinds.push_back(k < 3 ? std::optional(static_cast<synth::InjectionKind>(k)) : std::nullopt);
    auto rng = std::mt19937_64(o.seed);
    for (auto i = kinds.size(); i > 1; --i)
        std::swap(kinds[i - 1], kinds[rng() % i]);

    auto lines = std::vector<nlohmann::json> {};
    for (auto i = std::size_t { 0 }; i < o.count; ++i)
    {
        auto const derived = derive_seed(o.seed, i);
        auto problem = synth::generate_problem(derived, config->synth);
        problem.problem.id = "synth-" + std::to_string(o.seed) + "-" + std::to_string(i);
        if (auto const kind = kinds[i])
        {
            auto spec = synth::InjectionSpec { .kind = *kind };
            auto const reads = problem.read_groups.size();
            if (*kind == synth::InjectionKind::Perception)
                spec.step_index = 1 + derive_seed(derived, 1) % reads;
            else if (*kind == synth::InjectionKind::Knowledge)
                spec.step_index = reads + 1;
            else
                spec.step_index = reads + 2;
            auto injected = synth::inject_error(problem, spec);
            if (!injected)
            {
                log.error("injection_failed", { { "id", problem.problem.id }, { "message", injected.error().detail } });
                return Fatal;
            }
            problem = std::move(*injected);
        }
        lines.push_back(synth::to_record(problem));
    }
    if (!write_output(*config->out, dataset::to_jsonl(lines), log))
        return Fatal;
    out << "wrote " << o.count << " problems: " << quotas[0] << " perception, " << quotas[1] << " calculation, "
        << quotas[2] << " knowledge, " << quotas[3] << " clean\n";
    return Success;
}

} // namespace

auto interrupt_flag() -> std::atomic<bool>&
{
    static auto flag = std::atomic<bool> { false };
    return flag;
}

auto apportion(std::size_t count, const std::vector<double>& fractions) -> std::vector<std::size_t>
{
    auto all = fractions;
    all.push_back(std::max(0.0, 1.0 - std::accumulate(fractions.begin(), fractions.end(), 0.0)));
    auto out = std::vector<std::size_t>(all.size());
    auto remainders = std::vector<std::pair<double, std::size_t>> {};
    auto assigned = std::size_t { 0 };
    for (auto k = std::size_t { 0 }; k < all.size(); ++k)
    {
        auto const exact = static_cast<double>(count) * all[k];
        out[k] = static_cast<std::size_t>(std::floor(exact + 1e-9));
        assigned += out[k];
        remainders.emplace_back(exact - static_cast<double>(out[k]), k);
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](auto const& a, auto const& b) { return a.first > b.first + 1e-12; });
    for (auto i = std::size_t { 0 }; assigned < count && i < remainders.size(); ++i, ++assigned)
        ++out[remainders[i].second];
    // Rounding can overshoot by one when fractions sum to exactly 1.
    while (assigned > count)
    {
        auto const k = static_cast<std::size_t>(std::max_element(out.begin(), out.end()) - out.begin());
        --out[k];
        --assigned;
    }
    return out;
}

auto run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log_stream) -> int
{
    auto log = Log(log_stream);
    auto o = Options {};
    auto app = CLI::App { "Tool-grounded step verification: verify, evaluate, curate and synthesize." };
    app.require_subcommand(1);

    auto const common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file");
        sub->add_option("--dataset", o.dataset, "Input records (JSONL)");
        sub->add_option("--out", o.out, "Output path");
        sub->add_option("--max-in-flight", o.max_in_flight, "Concurrent records / requests per backend");
    };
    auto* verify = app.add_subcommand("verify", "Run the verifier over a dataset");
    common(verify);
    verify->add_flag("--dry-run", o.dry_run, "Print the first prompt and exit");
    verify->add_flag("--allow-text-only", o.allow_text_only, "Accept problems without images");

    auto* evaluate = app.add_subcommand("evaluate", "Score a prediction file (macro F1 and FISI F1)");
    common(evaluate);

    auto* curate = app.add_subcommand("curate", "Filter teacher trajectories into weighted training data");
    common(curate);
    curate->add_option("--weight", o.weight, "Upweighting factor for samples with an Incorrect step");
    curate->add_flag("--allow-unit-weight", o.allow_unit_weight, "Permit weight <= 1 (ablations)");
    curate->add_option("--tau-correct", o.tau_correct, "MCTS score at or above which a step is correct");
    curate->add_option("--tau-incorrect", o.tau_incorrect, "MCTS score at or below which a step is incorrect");
    curate->add_flag("--allow-text-only", o.allow_text_only, "Accept problems without images");

    auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
    common(synth);
    synth->add_option("--seed", o.seed, "Seed")->default_val(0);
    synth->add_option("--count", o.count, "Number of problems")->required();
    synth->add_option("--mix", o.mix, "Injection mix, e.g. perception=0.5,calculation=0.25");

    try
    {
        auto reversed = std::vector<std::string>(args.rbegin(), args.rend());
        app.parse(reversed);
    }
    catch (const CLI::ParseError& e)
    {
        auto const code = app.exit(e, out, out);
        return code == 0 ? Success : Fatal;
    }

    try
    {
        if (verify->parsed())
            return cmd_verify(o, out, log);
        if (evaluate->parsed())
            return cmd_evaluate(o, out, log);
        if (curate->parsed())
            return cmd_curate(o, out, log);
        return cmd_synth(o, out, log);
    }
    catch (const std::exception& e)
    {
        log.error("fatal", { { "message", e.what() } });
        return Fatal;
    }
}

} // namespace tim::cli
