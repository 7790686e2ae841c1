// SPDX-License-Identifier: Apache-2.0
#pragma once

// Generators and independent oracles shared by the unit and acceptance
// tests. Nothing here calls the code under test except to build inputs.

#include <tim/metrics.hpp>
#include <tim/trajectory.hpp>

#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace tim::testing
{

inline auto data_path(const std::string& name) -> std::filesystem::path
{
    return std::filesystem::path(TIM_TEST_DATA_DIR) / name;
}

inline auto read_file(const std::filesystem::path& path) -> std::string
{
    auto in = std::ifstream(path, std::ios::binary);
    auto s = std::stringstream {};
    s << in.rdbuf();
    return s.str();
}

inline auto pick(std::mt19937_64& rng, std::size_t n) -> std::size_t
{
    return static_cast<std::size_t>(rng() % n);
}

/// Trimmed text with no tags and no header-like lines. May contain '<',
/// '#', JSON braces and newlines.
inline auto random_body(std::mt19937_64& rng) -> std::string
{
    static auto const words = std::vector<std::string> {
        "value", "119", "a < b", "sum", "x>=3", "{\"k\": 1}", "Store", "#7", "tool", "plan", "ratio", "->", "é", "[1, 2]",
    };
    auto out = std::string {};
    auto const n = 1 + pick(rng, 12);
    for (auto i = std::size_t { 0 }; i < n; ++i)
    {
        if (i)
            out += pick(rng, 6) == 0 ? "\n" : " ";
        out += words[pick(rng, words.size())];
    }
    return out;
}

inline auto random_paragraph(std::mt19937_64& rng, int id) -> ParagraphVerification
{
    auto p = ParagraphVerification { .paragraph_id = id };
    p.segments.push_back({ SegmentKind::Planning, random_body(rng) });
    auto const calls = pick(rng, 4);
    for (auto c = std::size_t { 0 }; c < calls; ++c)
    {
        p.segments.push_back({ SegmentKind::ToolCall, random_body(rng) });
        p.segments.push_back({ SegmentKind::ToolResponse, random_body(rng) });
    }
    p.segments.push_back({ SegmentKind::Analysis, random_body(rng) });
    static constexpr auto verdicts = std::array { Verdict::Correct, Verdict::Neutral, Verdict::Incorrect };
    p.verdict = verdicts[pick(rng, 3)];
    p.segments.push_back({ SegmentKind::Verdict, std::string(to_token(p.verdict)) });
    return p;
}

inline auto random_trajectory(std::mt19937_64& rng) -> Trajectory
{
    auto t = Trajectory {};
    auto const n = 1 + static_cast<int>(pick(rng, 8));
    for (auto id = 1; id <= n; ++id)
        t.paragraphs.push_back(random_paragraph(rng, id));
    return t;
}

struct Mutation
{
    std::string name;
    std::string text;
    std::set<FormatErrorKind> expected;
};

/// Hand-rolled serializer, independent of render_trajectory.
inline auto serialize(const Trajectory& t) -> std::string
{
    auto out = std::string {};
    for (auto const& p: t.paragraphs)
    {
        out += "### Paragraph " + std::to_string(p.paragraph_id) + "\n";
        for (auto const& s: p.segments)
            out += "<" + std::string(tag_name(s.kind)) + ">\n" + s.body + "\n</" + std::string(tag_name(s.kind)) + ">\n";
    }
    return out;
}

/// A grammar-breaking edit of a valid trajectory with the violation kinds
/// it may be classified as.
inline auto mutate(const Trajectory& valid, std::mt19937_64& rng) -> Mutation
{
    auto t = valid;
    auto const pi = pick(rng, t.paragraphs.size());
    auto& p = t.paragraphs[pi];
    using K = FormatErrorKind;

    switch (pick(rng, 8))
    {
        case 0: {
            auto text = serialize(t);
            auto const tag = "</" + std::string(tag_name(p.segments.front().kind)) + ">";
            auto const header = text.find("### Paragraph " + std::to_string(p.paragraph_id) + "\n");
            text.erase(text.find(tag, header), tag.size());
            return { "drop_close", text, { K::UnclosedTag, K::OutOfOrderSegment } };
        }
        case 1:
            p.segments.pop_back();
            return { "drop_verify", serialize(t), { K::MissingVerdict } };
        case 2:
            p.segments.back().body = "PROBABLY";
            return { "bad_token", serialize(t), { K::BadVerdictToken } };
        case 3:
            std::swap(p.segments.front(), p.segments[p.segments.size() - 2]);
            return { "swap", serialize(t), { K::OutOfOrderSegment } };
        case 4:
            if (t.paragraphs.size() >= 2)
            {
                t.paragraphs[1].paragraph_id = 1;
                return { "dup_id", serialize(t), { K::DuplicateParagraphId } };
            }
            [[fallthrough]];
        case 5:
            t.paragraphs.back().paragraph_id += 1;
            return { "skip_id", serialize(t), { K::NoncontiguousIds } };
        case 6: {
            auto text = serialize(t);
            for (auto pos = text.find("### Paragraph "); pos != std::string::npos; pos = text.find("### Paragraph "))
                text.erase(pos, text.find('\n', pos) - pos + 1);
            return { "no_header", text, { K::MissingHeader } };
        }
        default: {
            auto text = serialize(t);
            auto const header = "### Paragraph " + std::to_string(p.paragraph_id) + "\n";
            text.replace(text.find(header), header.size(), "### paragraph number " + std::to_string(p.paragraph_id) + "\n");
            return { "malformed_header", text, { K::MissingHeader } };
        }
    }
}

// ---- metric oracles ----------------------------------------------------

struct BruteCounts
{
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline auto brute_f1(const BruteCounts& c) -> double
{
    if (c.tp + c.fp + c.fn == 0)
        return 1.0;
    return 2.0 * static_cast<double>(c.tp) / (2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp) + static_cast<double>(c.fn));
}

/// Per-class confusion for class `incorrect_class` (true: Incorrect is the
/// class, false: Correct/Neutral is the class) by direct enumeration.
inline auto brute_class_counts(const std::vector<metrics::EvalRecord>& records, bool incorrect_class) -> BruteCounts
{
    auto c = BruteCounts {};
    for (auto const& r: records)
    {
        if (r.gold.size() != r.predicted.size() || r.gold.empty())
            continue;
        for (std::size_t i = 0; i < r.gold.size(); ++i)
        {
            bool const g = (r.gold[i] == Verdict::Incorrect) == incorrect_class;
            bool const p = (r.predicted[i] == Verdict::Incorrect) == incorrect_class;
            c.tp += g && p;
            c.fp += !g && p;
            c.fn += g && !p;
            c.tn += !g && !p;
        }
    }
    return c;
}

inline auto brute_first_error(const std::vector<Verdict>& labels) -> long long
{
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == Verdict::Incorrect)
            return static_cast<long long>(i) + 1;
    return -1;
}

inline auto brute_fisi_counts(const std::vector<metrics::EvalRecord>& records) -> BruteCounts
{
    auto c = BruteCounts {};
    for (auto const& r: records)
    {
        if (r.gold.size() != r.predicted.size() || r.gold.empty())
            continue;
        auto const g = brute_first_error(r.gold);
        auto const p = brute_first_error(r.predicted);
        c.tp += g != -1 && p == g;
        c.fp += p != -1 && p != g;
        c.fn += g != -1 && p != g;
        c.tn += g == -1 && p == -1;
    }
    return c;
}

inline auto random_records(std::mt19937_64& rng, std::size_t n) -> std::vector<metrics::EvalRecord>
{
    static auto const benches = std::vector<std::string> { "MMMU", "MathVision", "MathVerse-VO", "DynaMath", "WeMath" };
    static constexpr auto verdicts = std::array { Verdict::Correct, Verdict::Neutral, Verdict::Incorrect };
    auto out = std::vector<metrics::EvalRecord> {};
    for (std::size_t i = 0; i < n; ++i)
    {
        auto r = metrics::EvalRecord { .id = "r" + std::to_string(i), .benchmark = benches[pick(rng, benches.size())] };
        auto const len = 1 + pick(rng, 10);
        // Skewed toward Correct, like real step labels.
        for (std::size_t s = 0; s < len; ++s)
        {
            r.gold.push_back(pick(rng, 5) == 0 ? Verdict::Incorrect : verdicts[pick(rng, 2)]);
            r.predicted.push_back(pick(rng, 4) == 0 ? Verdict::Incorrect : verdicts[pick(rng, 2)]);
        }
        out.push_back(std::move(r));
    }
    return out;
}

} // namespace tim::testing
