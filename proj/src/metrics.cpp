// SPDX-License-Identifier: Apache-2.0
#include <tim/metrics.hpp>

#include <algorithm>
#include <cstdio>
#include <functional>

namespace tim::metrics
{

namespace
{

using Counter = std::function<void(const EvalRecord&, Score&)>;

void count_macro(const EvalRecord& r, Score& s)
{
    auto& pos = s.confusion["positive"];
    auto& neg = s.confusion["negative"];
    for (auto i = std::size_t { 0 }; i < r.gold.size(); ++i)
    {
        auto const g = binarize(r.gold[i]);
        auto const p = binarize(r.predicted[i]);
        if (g == Binary::Positive && p == Binary::Positive)
        {
            ++pos.tp;
            ++neg.tn;
        }
        else if (g == Binary::Positive)
        {
            ++pos.fn;
            ++neg.fp;
        }
        else if (p == Binary::Positive)
        {
            ++pos.fp;
            ++neg.fn;
        }
        else
        {
            ++pos.tn;
            ++neg.tp;
        }
    }
}

void count_fisi(const EvalRecord& r, Score& s)
{
    auto& c = s.confusion["first_error"];
    auto const g = first_error_index(r.gold);
    auto const p = first_error_index(r.predicted);
    if (g && p == g)
        ++c.tp;
    else
    {
        if (p)
            ++c.fp;
        if (g)
            ++c.fn;
        if (!p && !g)
            ++c.tn;
    }
}

void finish_macro(Score& s, std::vector<std::string>&)
{
    s.value = (f1(s.confusion["positive"]) + f1(s.confusion["negative"])) / 2.0;
}

void finish_fisi(Score& s, std::vector<std::string>& warnings, const std::string& scope)
{
    auto const& c = s.confusion["first_error"];
    if (c.tp + c.fp + c.fn == 0)
    {
        s.value = 0.0;
        s.degenerate = true;
        warnings.push_back("FISI undefined for " + scope + ": no record has a gold or predicted error; reported as 0");
    }
    else
        s.value = f1(c);
}

template <typename Finish>
auto score(std::span<const EvalRecord> records, std::string metric, const Counter& count, Finish finish) -> F1Report
{
    auto report = F1Report { .metric = std::move(metric) };
    if (records.empty())
        report.warnings.emplace_back("no records to score");

    for (auto const& r: records)
    {
        if (r.gold.size() != r.predicted.size() || r.gold.empty())
        {
            report.excluded.push_back(r.id);
            report.warnings.push_back("record '" + r.id + "' excluded: length_mismatch (gold "
                                      + std::to_string(r.gold.size()) + ", predicted "
                                      + std::to_string(r.predicted.size()) + ")");
            continue;
        }
        auto& b = report.per_benchmark[r.benchmark];
        count(r, b);
        count(r, report.overall);
        for (auto* s: { &b, &report.overall })
        {
            ++s->records;
            s->steps += r.gold.size();
        }
    }

    auto sum = 0.0;
    for (auto& [name, s]: report.per_benchmark)
    {
        finish(s, report.warnings, "benchmark " + name);
        sum += s.value;
    }
    finish(report.overall, report.warnings, std::string("overall"));
    report.overall_benchmark_mean =
        report.per_benchmark.empty() ? 0.0 : sum / static_cast<double>(report.per_benchmark.size());
    return report;
}

auto confusion_json(const Confusion& c) -> nlohmann::json
{
    return { { "tp", c.tp }, { "fp", c.fp }, { "fn", c.fn }, { "tn", c.tn } };
}

auto score_json(const Score& s) -> nlohmann::json
{
    auto confusion = nlohmann::json::object();
    for (auto const& [name, c]: s.confusion)
        confusion[name] = confusion_json(c);
    return {
        { "score", s.value },
        { "score_pct", percent(s.value) },
        { "records", s.records },
        { "steps", s.steps },
        { "confusion", confusion },
        { "degenerate", s.degenerate },
    };
}

} // namespace

auto binarize(Verdict label) -> Binary
{
    return label == Verdict::Incorrect ? Binary::Negative : Binary::Positive;
}

auto first_error_index(std::span<const Verdict> labels) -> std::optional<std::size_t>
{
    auto const it = std::find_if(labels.begin(), labels.end(),
                                 [](Verdict v) { return binarize(v) == Binary::Negative; });
    if (it == labels.end())
        return std::nullopt;
    return static_cast<std::size_t>(it - labels.begin()) + 1;
}

auto first_error_code(std::span<const Verdict> labels) -> long long
{
    auto const idx = first_error_index(labels);
    return idx ? static_cast<long long>(*idx) : -1;
}

auto Confusion::operator+=(const Confusion& o) -> Confusion&
{
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

auto f1(const Confusion& c) -> double
{
    auto const denominator = 2 * c.tp + c.fp + c.fn;
    if (denominator == 0)
        return 1.0;
    return static_cast<double>(2 * c.tp) / static_cast<double>(denominator);
}

auto macro_f1(std::span<const EvalRecord> records) -> F1Report
{
    return score(records, std::string(MacroF1Version), count_macro,
                 [](Score& s, std::vector<std::string>& w, const std::string&) { finish_macro(s, w); });
}

auto fisi_f1(std::span<const EvalRecord> records) -> F1Report
{
    return score(records, std::string(FisiVersion), count_fisi, finish_fisi);
}

auto ordered_benchmarks(const F1Report& report) -> std::vector<std::string>
{
    auto out = std::vector<std::string> {};
    for (auto name: KnownBenchmarks)
        if (report.per_benchmark.contains(std::string(name)))
            out.emplace_back(name);
    for (auto const& [name, _]: report.per_benchmark)
        if (std::find(out.begin(), out.end(), name) == out.end())
            out.push_back(name);
    return out;
}

auto to_json(const F1Report& report) -> nlohmann::json
{
    auto per = nlohmann::json::object();
    for (auto const& [name, s]: report.per_benchmark)
        per[name] = score_json(s);
    return {
        { "metric", report.metric },
        { "per_benchmark", per },
        { "overall", score_json(report.overall) },
        { "overall_benchmark_mean", report.overall_benchmark_mean },
        { "overall_benchmark_mean_pct", percent(report.overall_benchmark_mean) },
        { "excluded", report.excluded },
        { "warnings", report.warnings },
    };
}

auto percent(double fraction) -> std::string
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
    return buf;
}

} // namespace tim::metrics
