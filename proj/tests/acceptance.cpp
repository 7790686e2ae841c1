// SPDX-License-Identifier: Apache-2.0
//
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails.

#include "stub_server.hpp"
#include "support.hpp"

#include <tim/backends.hpp>
#include <tim/curation.hpp>
#include <tim/engine.hpp>
#include <tim/metrics.hpp>
#include <tim/remote.hpp>
#include <tim/synthetic.hpp>
#include <tim/text.hpp>
#include <tim/tool.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>

using namespace tim;

namespace
{

struct Outcome
{
    bool pass = true;
    std::string detail;
};

/// Collects failed expectations without stopping the criterion.
class Checker
{
  public:
    void expect(bool ok, const std::string& what)
    {
        if (!ok && _failures.size() < 5)
            _failures.push_back(what);
        _ok = _ok && ok;
    }

    [[nodiscard]] auto outcome(std::string summary) const -> Outcome
    {
        if (_ok)
            return { true, std::move(summary) };
        auto detail = summary;
        for (auto const& f: _failures)
            detail += "; " + f;
        return { false, detail };
    }

  private:
    bool _ok = true;
    std::vector<std::string> _failures;
};

auto fmt(double x, int digits = 4) -> std::string
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

auto close(double a, double b, double tol = 1e-12) -> bool
{
    return std::abs(a - b) <= tol;
}

// ---- 1 ------------------------------------------------------------------

auto grammar_round_trip() -> Outcome
{
    auto c = Checker {};
    auto rng = std::mt19937_64(20240601);
    auto round_trip_failures = 0;
    for (auto i = 0; i < 1000; ++i)
    {
        auto const t = testing::random_trajectory(rng);
        auto parsed = parse_trajectory(render_trajectory(t));
        if (!parsed || !(*parsed == t) || !validate_format(*parsed, t.paragraphs.size()).empty())
            ++round_trip_failures;
    }
    c.expect(round_trip_failures == 0, std::to_string(round_trip_failures) + " round-trip failures");

    auto unclassified = 0;
    auto kinds = std::set<FormatErrorKind> {};
    for (auto i = 0; i < 500; ++i)
    {
        auto const t = testing::random_trajectory(rng);
        auto const m = testing::mutate(t, rng);
        auto parsed = parse_trajectory(m.text);
        auto error = std::optional<FormatError> {};
        if (!parsed)
            error = parsed.error();
        else if (auto v = validate_format(*parsed, t.paragraphs.size()); !v.empty())
            error = v.front();
        if (!error || !m.expected.contains(error->kind))
            ++unclassified;
        else
            kinds.insert(error->kind);
    }
    c.expect(unclassified == 0, std::to_string(unclassified) + " mutations not classified as expected");
    return c.outcome("1000 round-trips, 0 failures; 500 mutations classified into " + std::to_string(kinds.size())
                     + " error kinds");
}

// ---- 2 ------------------------------------------------------------------

auto worked_example() -> Outcome
{
    auto c = Checker {};
    auto const raw = testing::read_file(testing::data_path("heatmap_paragraph.txt"));
    auto p = parse_paragraph(raw);
    c.expect(p.has_value(), "heatmap paragraph does not parse");
    if (!p)
        return c.outcome("");
    c.expect(p->segments.size() == 5, "segment count " + std::to_string(p->segments.size()));
    c.expect(p->verdict == Verdict::Correct, "verdict not Correct");

    auto call = parse_tool_call(p->segments.size() > 1 ? p->segments[1].body : "");
    c.expect(call.has_value(), "tool call does not parse");
    if (!call)
        return c.outcome("");
    c.expect(call->target_image == 1, "target_image " + std::to_string(call->target_image));
    c.expect(call->questions.size() == 1, "question count " + std::to_string(call->questions.size()));

    auto scene = Scene { .kind = SceneKind::ValueGrid };
    scene.grid.rows = { "Product 1" };
    scene.grid.columns = { "Store A", "Store B", "Store C", "Store D" };
    scene.grid.values = { { 119, 177, 116, 159 } };
    auto oracle = OracleAnswerer {};
    auto const images = std::vector<ImageRef> { ImageRef::from_scene(scene) };
    auto answer = execute_ask_questions(*call, images, oracle);
    c.expect(answer.has_value(), "oracle call failed");
    auto const values = answer ? text::extract_integers(format_tool_response(*answer)) : std::vector<long long> {};
    c.expect(values == std::vector<long long> { 119, 177, 116, 159 }, "oracle did not return the four values");

    auto const analysis = text::extract_integers(p->segments.size() > 3 ? p->segments[3].body : "");
    auto const sum_at = std::find(analysis.begin(), analysis.end(), 571);
    c.expect(sum_at != analysis.end() && sum_at - analysis.begin() >= 4, "analysis does not state 571 after its terms");
    if (sum_at != analysis.end() && sum_at - analysis.begin() >= 4)
        c.expect(*(sum_at - 4) + *(sum_at - 3) + *(sum_at - 2) + *(sum_at - 1) == 571, "stated terms do not sum to 571");
    auto total = 0LL;
    for (auto v: values)
        total += v;
    c.expect(total == 571, "oracle values sum to " + std::to_string(total));
    return c.outcome("5 segments, verdict CORRECT, target_image=1, 1 question, oracle 119+177+116+159=571");
}

// ---- 3 ------------------------------------------------------------------

auto metric_equivalence() -> Outcome
{
    auto c = Checker {};
    auto rng = std::mt19937_64(777);
    auto const records = testing::random_records(rng, 10000);
    auto const macro = metrics::macro_f1(records);
    auto const fisi = metrics::fisi_f1(records);

    auto const same = [](const metrics::Confusion& got, const testing::BruteCounts& want) {
        return got.tp == want.tp && got.fp == want.fp && got.fn == want.fn && got.tn == want.tn;
    };

    auto by_bench = std::map<std::string, std::vector<metrics::EvalRecord>> {};
    for (auto const& r: records)
        by_bench[r.benchmark].push_back(r);
    by_bench["<overall>"] = records;

    auto macro_mean = 0.0;
    auto fisi_mean = 0.0;
    for (auto const& [name, subset]: by_bench)
    {
        auto const& ms = name == "<overall>" ? macro.overall : macro.per_benchmark.at(name);
        auto const& fs = name == "<overall>" ? fisi.overall : fisi.per_benchmark.at(name);
        auto const pos = testing::brute_class_counts(subset, false);
        auto const neg = testing::brute_class_counts(subset, true);
        auto const fc = testing::brute_fisi_counts(subset);
        c.expect(same(ms.confusion.at("positive"), pos), name + ": positive counts differ");
        c.expect(same(ms.confusion.at("negative"), neg), name + ": negative counts differ");
        c.expect(same(fs.confusion.at("first_error"), fc), name + ": first-error counts differ");
        auto const brute_macro = (testing::brute_f1(pos) + testing::brute_f1(neg)) / 2.0;
        auto const brute_fisi = testing::brute_f1(fc);
        c.expect(close(ms.value, brute_macro), name + ": macro F1 " + fmt(ms.value, 15) + " vs " + fmt(brute_macro, 15));
        c.expect(close(fs.value, brute_fisi), name + ": FISI F1 " + fmt(fs.value, 15) + " vs " + fmt(brute_fisi, 15));
        if (name != "<overall>")
        {
            macro_mean += brute_macro;
            fisi_mean += brute_fisi;
        }
    }
    auto const benches = static_cast<double>(by_bench.size() - 1);
    c.expect(close(macro.overall_benchmark_mean, macro_mean / benches), "macro benchmark mean differs");
    c.expect(close(fisi.overall_benchmark_mean, fisi_mean / benches), "FISI benchmark mean differs");
    return c.outcome("10000 records; macro F1 " + fmt(macro.overall.value) + ", FISI F1 " + fmt(fisi.overall.value)
                     + " equal brute force per benchmark and overall");
}

// ---- 4 ------------------------------------------------------------------

auto recall_of(const testing::BruteCounts& c) -> double
{
    return c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
}

auto debiasing() -> Outcome
{
    auto c = Checker {};
    auto oracle = OracleAnswerer {};
    auto grounded = synth::ToolGroundedPolicy {};
    auto sycophant = SycophantBackend {};

    auto grounded_records = std::vector<metrics::EvalRecord> {};
    auto sycophant_records = std::vector<metrics::EvalRecord> {};
    auto failures = 0;
    for (auto seed = std::uint64_t { 0 }; seed < 200; ++seed)
    {
        auto const p = synth::generate_problem(seed, { .read_steps = 1 + seed % 4 });
        auto q = synth::inject_error(
            p, { .step_index = 1 + (seed / 4) % p.read_groups.size(), .kind = synth::InjectionKind::Perception });
        if (!q)
        {
            ++failures;
            continue;
        }
        auto const gold = synth::gold_labels(*q);
        auto g = verify_solution(q->problem, grounded, oracle);
        auto s = verify_solution(q->problem, sycophant, oracle);
        if (!g || !s)
        {
            ++failures;
            continue;
        }
        grounded_records.push_back({ q->problem.id, "synthetic", gold, g->verdicts });
        sycophant_records.push_back({ q->problem.id, "synthetic", gold, s->verdicts });
    }
    c.expect(failures == 0, std::to_string(failures) + " injected problems failed to run");

    auto flagged = 0;
    auto clean_runs = 0;
    for (auto seed = std::uint64_t { 10000 }; seed < 10200; ++seed)
    {
        auto const p = synth::generate_problem(seed, { .read_steps = 1 + seed % 4 });
        auto g = verify_solution(p.problem, grounded, oracle);
        if (!g)
            continue;
        ++clean_runs;
        if (std::find(g->verdicts.begin(), g->verdicts.end(), Verdict::Incorrect) != g->verdicts.end())
            ++flagged;
    }
    c.expect(clean_runs == 200, std::to_string(clean_runs) + " of 200 clean problems ran");

    auto const gc = testing::brute_fisi_counts(grounded_records);
    auto const sc = testing::brute_fisi_counts(sycophant_records);
    auto const grounded_recall = recall_of(gc);
    auto const sycophant_recall = recall_of(sc);
    auto const false_flag = clean_runs ? static_cast<double>(flagged) / clean_runs : 1.0;

    // The library's FISI confusion must agree with the counting oracle.
    auto const gf = metrics::fisi_f1(grounded_records).overall.confusion.at("first_error");
    auto const sf = metrics::fisi_f1(sycophant_records).overall.confusion.at("first_error");
    c.expect(gf.tp == gc.tp && gf.fn == gc.fn, "grounded FISI confusion disagrees with the oracle");
    c.expect(sf.tp == sc.tp && sf.fn == sc.fn, "sycophant FISI confusion disagrees with the oracle");

    c.expect(grounded_records.size() == 200, "grounded ran " + std::to_string(grounded_records.size()) + " of 200");
    c.expect(grounded_recall >= 0.95, "tool-grounded recall " + fmt(grounded_recall, 3) + " < 0.95");
    c.expect(sycophant_recall == 0.0, "sycophant recall " + fmt(sycophant_recall, 3) + " != 0.00");
    c.expect(false_flag <= 0.05, "false-flag rate " + fmt(false_flag, 3) + " > 0.05");
    return c.outcome("tool-grounded recall " + fmt(grounded_recall, 2) + ", sycophant recall " + fmt(sycophant_recall, 2)
                     + ", false-flag rate " + fmt(false_flag, 2) + " on 200 clean");
}

// ---- 5 ------------------------------------------------------------------

auto weighted_loss() -> Outcome
{
    using enum curation::Partition;
    auto c = Checker {};
    auto const losses = std::vector<double> { 1, 1, 4 };
    auto const parts = std::vector<curation::Partition> { DPlus, DPlus, DMinus };
    auto const w10 = curation::weighted_nll(losses, parts, 10);
    auto const w1 = curation::weighted_nll(losses, parts, 1);
    c.expect(w10 && w10->value == 41.0, "w=10 gives " + (w10 ? fmt(w10->value, 15) : std::string("error")));
    c.expect(w1 && w1->value == 5.0, "w=1 gives " + (w1 ? fmt(w1->value, 15) : std::string("error")));

    auto rng = std::mt19937_64(55);
    auto worst = 0.0;
    for (auto i = 0; i < 100; ++i)
    {
        auto const n = 2 + testing::pick(rng, 20);
        auto l = std::vector<double>(n);
        auto p = std::vector<curation::Partition>(n);
        for (auto k = std::size_t { 0 }; k < n; ++k)
        {
            l[k] = std::uniform_real_distribution<double>(0.0, 8.0)(rng);
            p[k] = testing::pick(rng, 2) ? DMinus : DPlus;
        }
        auto const w = std::uniform_real_distribution<double>(1.5, 20.0)(rng);
        auto const scale = std::uniform_real_distribution<double>(0.01, 100.0)(rng);
        auto scaled = l;
        for (auto& x: scaled)
            x *= scale;
        auto const a = curation::weighted_nll(l, p, w);
        auto const b = curation::weighted_nll(scaled, p, w);
        if (!a || !b)
        {
            c.expect(false, "instance " + std::to_string(i) + " errored");
            continue;
        }
        auto const rel = std::abs(b->value - scale * a->value) / std::max(1.0, std::abs(b->value));
        worst = std::max(worst, rel);
    }
    char worst_text[32];
    std::snprintf(worst_text, sizeof worst_text, "%.1e", worst);
    c.expect(worst <= 1e-12, std::string("homogeneity relative error ") + worst_text);
    return c.outcome(std::string("w=10 -> 41, w=1 -> 5, 100 scaling instances within ") + worst_text);
}

// ---- 6 ------------------------------------------------------------------

auto consensus() -> Outcome
{
    auto c = Checker {};
    auto rng = std::mt19937_64(6);
    auto const transcript = [](const std::vector<Verdict>& v) {
        auto out = std::string {};
        for (auto i = std::size_t { 0 }; i < v.size(); ++i)
            out += "### Paragraph " + std::to_string(i + 1) + "\n<planning>\np\n</planning>\n<analyze>\na\n</analyze>\n"
                   "<verify>\n"
                   + std::string(to_token(v[i])) + "\n</verify>\n";
        return out;
    };

    auto expected_kept = std::set<std::string> {};
    auto kept = std::set<std::string> {};
    auto observations = std::vector<curation::FirstErrorObservation> {};
    for (auto i = 0; i < 300; ++i)
    {
        auto const group = i / 100;
        auto const n = 2 + testing::pick(rng, 6);
        auto sample = curation::RawSample { .id = "s" + std::to_string(i), .question = "q", .images = { "img" } };
        sample.steps.assign(n, "step");
        auto scores = std::vector<double>(n, 0.9);
        auto verdicts = std::vector<Verdict>(n, Verdict::Correct);
        auto const mark = [&](std::size_t mcts, std::size_t teacher) { // 1-based, 0 = none
            if (mcts)
                for (auto k = mcts - 1; k < n; ++k)
                    scores[k] = 0.0;
            if (teacher)
            {
                verdicts[teacher - 1] = Verdict::Incorrect;
                for (auto k = teacher; k < n; ++k)
                    verdicts[k] = testing::pick(rng, 2) ? Verdict::Neutral : Verdict::Incorrect;
            }
        };
        if (group == 0)
            expected_kept.insert(sample.id);
        else if (group == 1)
        {
            auto const k = 1 + testing::pick(rng, n);
            mark(k, k);
            expected_kept.insert(sample.id);
        }
        else
        {
            auto const a = 1 + testing::pick(rng, n);
            auto b = 1 + testing::pick(rng, n - 1);
            if (b >= a)
                ++b;
            switch (i % 3)
            {
                case 0: mark(a, b); break; // both flag, at different steps
                case 1: mark(a, 0); break; // teacher misses the error
                default: mark(0, a); break; // teacher flags a clean sample
            }
        }
        sample.mcts_scores = scores;

        auto candidate = curation::format_filter(sample, transcript(verdicts));
        c.expect(candidate.has_value(), sample.id + " failed the format filter");
        if (!candidate)
            continue;
        auto decision = curation::consensus_filter(*candidate, {});
        c.expect(decision.has_value(), sample.id + " consensus error");
        if (!decision)
            continue;
        if (decision->keep)
            kept.insert(sample.id);
        observations.push_back({ sample.id,
                                 testing::brute_first_error(std::vector<Verdict>(
                                     [&] {
                                         auto v = std::vector<Verdict> {};
                                         for (auto s: scores)
                                             v.push_back(s <= 0.0 ? Verdict::Incorrect : Verdict::Correct);
                                         return v;
                                     }())),
                                 testing::brute_first_error(verdicts), decision->keep });
        // Re-scan: kept samples agree on the first error.
        if (decision->keep)
            c.expect(observations.back().mcts == observations.back().teacher, sample.id + " kept without agreement");
    }
    c.expect(kept == expected_kept, std::to_string(kept.size()) + " kept, expected exactly the 200 agreeing");
    auto const analysis = curation::analyze_first_error_distribution(observations);
    auto const kept_off = curation::off_diagonal_mass(analysis.kept_grid);
    auto const all_off = curation::off_diagonal_mass(analysis.grid);
    c.expect(kept_off == 0, "kept off-diagonal mass " + std::to_string(kept_off));
    c.expect(all_off == 100, "full-grid off-diagonal mass " + std::to_string(all_off) + ", expected 100");
    return c.outcome(std::to_string(kept.size()) + " of 300 kept (exactly the agreeing set), kept off-diagonal mass "
                     + std::to_string(kept_off));
}

// ---- 7 ------------------------------------------------------------------

auto call_text(std::string_view column) -> std::string
{
    return "<tool_call>\n{\"name\": \"ask_questions\", \"arguments\": {\"target_image\": 1, \"questions\": [\"In row "
           "'Product 1', which numbers appear in the column '"
           + std::string(column) + "'?\"]}}\n</tool_call>";
}

auto engine_contract() -> Outcome
{
    auto c = Checker {};
    auto s = Scene { .kind = SceneKind::ValueGrid };
    s.grid.rows = { "Product 1" };
    s.grid.columns = { "Store A", "Store B", "Store C", "Store D" };
    s.grid.values = { { 119, 177, 116, 159 } };
    auto const problem = Problem { .id = "p1",
                                   .question = "What is the total of Product 1?",
                                   .images = { ImageRef::from_scene(s) },
                                   .steps = { "Step 1 text." } };
    auto oracle = OracleAnswerer {};

    auto scripted = ScriptedBackend(
        "verifier",
        { "### Paragraph 1\n\n<planning>\nCheck both stated values against the chart.\n</planning>\n\n" + call_text("Store A"),
          "\n\n" + call_text("Store B"), "\n\n<analyze>\nBoth values match.\n</analyze>\n\n<verify>\nCORRECT\n</verify>\n" });
    auto recorder = RecordingBackend(scripted);
    auto run = verify_solution(problem, recorder, oracle);
    c.expect(run.has_value(), "two-call run failed");
    auto const requests = recorder.requests();
    auto const golden = testing::read_file(testing::data_path("two_call_resume.golden"));
    c.expect(requests.size() == 3, std::to_string(requests.size()) + " generations, expected 3");
    if (requests.size() == 3)
    {
        c.expect(requests[2].messages.back().role == Role::Assistant, "resume context lacks an assistant prefix");
        c.expect(requests[2].messages.back().text == golden, "resume context differs from the golden file");
    }
    if (run)
        c.expect(run->tool_calls == std::vector<std::size_t> { 2 }, "tool call count");

    auto turns = std::vector<std::string> { "### Paragraph 1\n<planning>\nx\n</planning>\n" + call_text("Store A") };
    for (auto col: { "Store B", "Store C", "Store D" })
        turns.push_back("\n" + call_text(col));
    turns.push_back("\n<analyze>\na\n</analyze>\n<verify>\nCORRECT\n</verify>\n");
    auto four = ScriptedBackend("verifier", turns);
    auto over = verify_solution(problem, four, oracle, { .max_tool_calls_per_paragraph = 3 });
    c.expect(!over && over.error().kind == EngineErrorKind::BudgetExceeded, "4 calls under limit 3 not budget_exceeded");
    return c.outcome("resume context byte-equal to golden (" + std::to_string(golden.size())
                     + " bytes); 4 calls under limit 3 -> budget_exceeded");
}

// ---- 8 ------------------------------------------------------------------

/// Tool calls per paragraph, counted from the raw transcript text.
auto scan_tool_calls(const std::string& transcript) -> std::vector<std::size_t>
{
    auto out = std::vector<std::size_t> {};
    auto const header = std::string("### Paragraph ");
    for (auto pos = transcript.find(header); pos != std::string::npos;)
    {
        auto const next = transcript.find(header, pos + header.size());
        out.push_back(text::count_occurrences(transcript.substr(pos, next - pos), "<tool_call>"));
        pos = next;
    }
    return out;
}

auto tool_frequency() -> Outcome
{
    auto c = Checker {};
    auto const benches = std::vector<std::string> { "MMMU", "MathVision", "MathVerse-VO", "DynaMath", "WeMath" };
    auto oracle = OracleAnswerer {};
    auto policy = synth::ToolGroundedPolicy {};
    auto runs = std::vector<curation::ToolUsage> {};
    struct Tally
    {
        std::uint64_t cor = 0, cor_tool = 0, inc = 0, inc_tool = 0;
    };
    auto scan = std::map<std::string, Tally> {};
    static constexpr auto kinds = std::array { synth::InjectionKind::Perception, synth::InjectionKind::Knowledge,
                                               synth::InjectionKind::Calculation };
    for (auto seed = std::uint64_t { 0 }; seed < 150; ++seed)
    {
        auto p = synth::generate_problem(seed, { .read_steps = 1 + seed % 4 });
        auto const reads = p.read_groups.size();
        auto problem = p;
        if (seed % 4 != 3)
        {
            auto const kind = kinds[seed % 3];
            auto const step = kind == synth::InjectionKind::Perception ? 1 + seed % reads
                              : kind == synth::InjectionKind::Knowledge ? reads + 1
                                                                        : reads + 2;
            auto q = synth::inject_error(p, { .step_index = step, .kind = kind });
            c.expect(q.has_value(), "injection failed for seed " + std::to_string(seed));
            if (!q)
                continue;
            problem = *q;
        }
        auto run = verify_solution(problem.problem, policy, oracle);
        c.expect(run.has_value(), "run failed for seed " + std::to_string(seed));
        if (!run)
            continue;
        auto const& bench = benches[seed % benches.size()];
        auto const gold = synth::gold_labels(problem);
        runs.push_back({ bench, gold, run->tool_calls });

        auto const calls = scan_tool_calls(run->transcript);
        c.expect(calls.size() == gold.size(), "scan found " + std::to_string(calls.size()) + " paragraphs");
        for (auto k = std::size_t { 0 }; k < std::min(calls.size(), gold.size()); ++k)
            for (auto* t: { &scan[bench], &scan["Overall"] })
            {
                if (gold[k] == Verdict::Incorrect)
                {
                    ++t->inc;
                    t->inc_tool += calls[k] > 0;
                }
                else
                {
                    ++t->cor;
                    t->cor_tool += calls[k] > 0;
                }
            }
    }

    auto const report = curation::tool_frequency_report(runs);
    auto const j = curation::to_json(report);
    auto columns = benches;
    columns.push_back("Overall");
    c.expect(j["columns"] == nlohmann::json(columns), "columns " + j["columns"].dump());
    auto const pct = [](std::uint64_t num, std::uint64_t den) {
        return den == 0 ? std::string("0.0") : fmt(100.0 * static_cast<double>(num) / static_cast<double>(den), 1);
    };
    for (auto const& name: columns)
    {
        auto const& t = scan[name];
        auto const& row = name == "Overall" ? report.overall : report.per_benchmark.at(name);
        c.expect(row.correct.steps == t.cor && row.correct.with_tool == t.cor_tool, name + " Cor counts differ");
        c.expect(row.incorrect.steps == t.inc && row.incorrect.with_tool == t.inc_tool, name + " Inc counts differ");
        c.expect(j["rows"][name]["Cor"] == pct(t.cor_tool, t.cor), name + " Cor " + j["rows"][name]["Cor"].dump());
        c.expect(j["rows"][name]["Inc"] == pct(t.inc_tool, t.inc), name + " Inc " + j["rows"][name]["Inc"].dump());
    }
    auto const& o = scan["Overall"];
    return c.outcome("150 runs over 5 benchmarks; Overall Cor " + pct(o.cor_tool, o.cor) + "%, Inc "
                     + pct(o.inc_tool, o.inc) + "% equal the transcript scan");
}

// ---- 9 ------------------------------------------------------------------

auto completion(const std::string& content, const std::string& finish, nlohmann::json stop_reason = nullptr)
    -> std::string
{
    return nlohmann::json { { "choices",
                              { { { "index", 0 },
                                  { "message", { { "role", "assistant" }, { "content", content } } },
                                  { "finish_reason", finish },
                                  { "stop_reason", stop_reason } } } } }
        .dump();
}

auto wire_protocol() -> Outcome
{
    auto c = Checker {};
    auto const request = GenerationRequest {
        .messages = { { Role::System, "You are a verifier.", {} },
                      { Role::User, "Check this.", { ImageRef { .source = "data:image/png;base64,AAAA" } } },
                      { Role::Assistant, "### Paragraph 1", {} } },
        .stop_sequences = { "</tool_call>" },
        .max_tokens = 512,
        .temperature = 0.0,
    };
    auto const snapshot = nlohmann::json::parse(testing::read_file(testing::data_path("wire_request.json")));

    // Replies by hit: stop honoured server-side, stop ignored by the server,
    // length limit, plain end of message, then 429, 503, success.
    auto server = testing::StubServer([](int hit, httplib::Response& res) {
        switch (hit)
        {
            case 1: res.set_content(completion("<tool_call>\n{}\n", "stop", "</tool_call>"), "application/json"); break;
            case 2: res.set_content(completion("abc</tool_call>ignored", "stop", 151645), "application/json"); break;
            case 3: res.set_content(completion("cut", "length"), "application/json"); break;
            case 4: res.set_content(completion("done", "stop", 151645), "application/json"); break;
            case 5:
                res.status = 429;
                res.set_header("Retry-After", "1");
                break;
            case 6: res.status = 503; break;
            case 7: res.set_content(completion("ok", "stop"), "application/json"); break;
            default: res.status = 429; break;
        }
    });
    auto config = RemoteConfig {
        .base_url = server.base_url(),
        .model = "test-model",
        .api_key_env = "",
        .timeout = std::chrono::seconds(5),
        .max_attempts = 3,
        .initial_backoff = std::chrono::milliseconds(250),
    };
    auto backend = RemoteBackend("remote", config);
    auto waits = std::vector<std::chrono::milliseconds> {};
    backend.set_sleeper([&](std::chrono::milliseconds d) { waits.push_back(d); });

    auto r = backend.generate(request);
    c.expect(r && r->stop_reason == StopReason::StopSequence && r->matched_stop == "</tool_call>",
             "server stop not reported as stop_sequence");
    r = backend.generate(request);
    c.expect(r && r->text == "abc" && r->stop_reason == StopReason::StopSequence, "stop sequence not honoured locally");
    r = backend.generate(request);
    c.expect(r && r->stop_reason == StopReason::LengthLimit, "length not mapped to length_limit");
    r = backend.generate(request);
    c.expect(r && r->stop_reason == StopReason::EndOfMessage, "eos not mapped to end_of_message");

    r = backend.generate(request);
    c.expect(r && r->text == "ok", "429/503 not retried to success");
    c.expect(waits == std::vector<std::chrono::milliseconds> { std::chrono::seconds(1), std::chrono::milliseconds(500) },
             "backoff schedule unexpected");

    waits.clear();
    r = backend.generate(request);
    c.expect(!r && r.error().kind == BackendErrorKind::RateLimited, "persistent 429 not surfaced as rate_limited");
    c.expect(waits.size() == 2, "expected 2 backoff sleeps before giving up");

    auto const bodies = server.bodies();
    c.expect(bodies.size() == 10, std::to_string(bodies.size()) + " requests reached the stub, expected 10");
    auto all_match = !bodies.empty();
    for (auto const& b: bodies)
        all_match = all_match && nlohmann::json::parse(b, nullptr, false) == snapshot;
    c.expect(all_match, "request body differs from the snapshot");
    return c.outcome("request equals snapshot; stop, length and eos mapped; 429+503 retried to success; persistent "
                     "429 -> rate_limited");
}

struct Criterion
{
    int number;
    std::string name;
    std::optional<double> limit_s;
    std::function<Outcome()> run;
};

} // namespace

auto main() -> int
{
    auto const criteria = std::vector<Criterion> {
        { 1, "grammar round-trip", 10.0, grammar_round_trip },
        { 2, "worked example fidelity", std::nullopt, worked_example },
        { 3, "metric oracle equivalence", 30.0, metric_equivalence },
        { 4, "debiasing demonstration", 60.0, debiasing },
        { 5, "weighted loss", std::nullopt, weighted_loss },
        { 6, "consensus filtering", 10.0, consensus },
        { 7, "engine loop contract", std::nullopt, engine_contract },
        { 8, "tool-frequency report", std::nullopt, tool_frequency },
        { 9, "wire protocol conformance", std::nullopt, wire_protocol },
    };
    auto failed = 0;
    for (auto const& criterion: criteria)
    {
        auto const start = std::chrono::steady_clock::now();
        auto outcome = Outcome {};
        try
        {
            outcome = criterion.run();
        }
        catch (const std::exception& e)
        {
            outcome = { false, std::string("exception: ") + e.what() };
        }
        auto const seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        auto timing = fmt(seconds, 2) + " s";
        if (criterion.limit_s)
        {
            timing += " / limit " + fmt(*criterion.limit_s, 0) + " s";
            if (seconds >= *criterion.limit_s)
            {
                outcome.pass = false;
                outcome.detail += "; over time limit";
            }
        }
        failed += !outcome.pass;
        std::cout << (outcome.pass ? "PASS" : "FAIL") << "  [" << criterion.number << "] " << criterion.name << ": "
                  << outcome.detail << " (" << timing << ")" << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " of 9 criteria failed" : std::string("all 9 criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
