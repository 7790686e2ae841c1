// SPDX-License-Identifier: Apache-2.0
#include <tim/text.hpp>
#include <tim/trajectory.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <set>

namespace tim
{

namespace
{

constexpr auto AllKinds = std::array {
    SegmentKind::Planning, SegmentKind::ToolCall, SegmentKind::ToolResponse, SegmentKind::Analysis, SegmentKind::Verdict,
};

constexpr auto HeaderPrefix = std::string_view { "### Paragraph " };

struct HeaderLine
{
    std::size_t line_begin;
    std::size_t body_begin; // first byte after the line terminator
    std::optional<int> id;  // nullopt for a malformed header
};

auto parse_header_id(std::string_view trimmed) -> std::optional<int>
{
    if (!text::starts_with(trimmed, HeaderPrefix))
        return std::nullopt;
    auto digits = trimmed.substr(HeaderPrefix.size());
    if (digits.empty() || !std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    auto id = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
    if (ec != std::errc {} || ptr != digits.data() + digits.size())
        return std::nullopt;
    return id;
}

auto find_headers(std::string_view raw) -> std::vector<HeaderLine>
{
    auto headers = std::vector<HeaderLine> {};
    auto begin = std::size_t { 0 };
    while (begin < raw.size())
    {
        auto end = raw.find('\n', begin);
        auto const next = end == std::string_view::npos ? raw.size() : end + 1;
        auto const line = raw.substr(begin, (end == std::string_view::npos ? raw.size() : end) - begin);
        auto const trimmed = text::trim(line);
        if (auto id = parse_header_id(trimmed))
            headers.push_back({ begin, next, id });
        else if (!trimmed.empty() && trimmed.front() == '#'
                 && text::to_lower(trimmed).find("paragraph") != std::string::npos)
            headers.push_back({ begin, next, std::nullopt });
        begin = next;
    }
    return headers;
}

struct OrderProblem
{
    FormatErrorKind kind;
    std::size_t index;
    std::string detail;
};

auto find_order_problem(const std::vector<Segment>& segments) -> std::optional<OrderProblem>
{
    auto const n = segments.size();
    auto const verdicts =
        std::count_if(segments.begin(), segments.end(), [](const Segment& s) { return s.kind == SegmentKind::Verdict; });
    if (verdicts == 0)
        return OrderProblem { FormatErrorKind::MissingVerdict, n, "no <verify> segment" };

    auto i = std::size_t { 0 };
    auto const is = [&](SegmentKind k) { return i < n && segments[i].kind == k; };
    auto const fail = [&](std::string what) {
        return OrderProblem { FormatErrorKind::OutOfOrderSegment, i, std::move(what) };
    };

    if (!is(SegmentKind::Planning))
        return fail("expected <planning> first");
    ++i;
    while (is(SegmentKind::ToolCall))
    {
        ++i;
        if (!is(SegmentKind::ToolResponse))
            return fail("<tool_call> must be followed by <tool>");
        ++i;
    }
    if (!is(SegmentKind::Analysis))
        return fail("expected <analyze>");
    ++i;
    if (!is(SegmentKind::Verdict))
        return fail("expected <verify> after <analyze>");
    ++i;
    if (i != n)
        return fail("segments after <verify>");
    return std::nullopt;
}

struct TagHit
{
    std::size_t pos;
    SegmentKind kind;
    bool closing;
};

auto match_tag_at(std::string_view s, std::size_t pos) -> std::optional<TagHit>
{
    auto const rest = s.substr(pos);
    for (auto kind: AllKinds)
    {
        if (text::starts_with(rest, open_tag(kind)))
            return TagHit { pos, kind, false };
        if (text::starts_with(rest, close_tag(kind)))
            return TagHit { pos, kind, true };
    }
    return std::nullopt;
}

auto first_tag_in(std::string_view s) -> std::optional<TagHit>
{
    for (auto pos = s.find('<'); pos != std::string_view::npos; pos = s.find('<', pos + 1))
        if (auto hit = match_tag_at(s, pos))
            return hit;
    return std::nullopt;
}

auto error_at(FormatErrorKind kind, std::optional<int> id, std::size_t offset, std::string detail) -> FormatError
{
    return FormatError { .kind = kind, .paragraph_id = id, .offset = offset, .detail = std::move(detail) };
}

// Parses the tagged content of one paragraph. `base` is the offset of
// `chunk` within the original input.
auto parse_chunk(std::string_view chunk, std::size_t base, int id) -> Expected<ParagraphVerification, FormatError>
{
    auto paragraph = ParagraphVerification { .paragraph_id = id };
    auto offsets = std::vector<std::size_t> {};

    auto pos = std::size_t { 0 };
    while (true)
    {
        auto const lt = chunk.find('<', pos);
        if (lt == std::string_view::npos)
            break;
        auto const hit = match_tag_at(chunk, lt);
        if (!hit)
        {
            pos = lt + 1;
            continue;
        }
        if (hit->closing)
            return unexpected(error_at(FormatErrorKind::OutOfOrderSegment, id, base + lt,
                                       "stray " + close_tag(hit->kind)));

        auto const bodyBegin = lt + open_tag(hit->kind).size();
        auto const closer = close_tag(hit->kind);
        auto const closePos = chunk.find(closer, bodyBegin);
        if (closePos == std::string_view::npos)
            return unexpected(error_at(FormatErrorKind::UnclosedTag, id, base + lt, open_tag(hit->kind) + " is never closed"));

        auto const body = chunk.substr(bodyBegin, closePos - bodyBegin);
        if (auto nested = first_tag_in(body))
            return unexpected(error_at(FormatErrorKind::OutOfOrderSegment, id, base + bodyBegin + nested->pos,
                                       "tag nested inside " + open_tag(hit->kind)));

        auto segment = Segment { hit->kind, std::string(text::trim(body)) };
        if (hit->kind == SegmentKind::Verdict)
        {
            auto const v = parse_verdict(segment.body);
            if (!v)
                return unexpected(error_at(FormatErrorKind::BadVerdictToken, id, base + bodyBegin,
                                           "unrecognised verdict '" + segment.body + "'"));
            segment.body = std::string(to_token(*v));
            paragraph.verdict = *v;
        }
        paragraph.segments.push_back(std::move(segment));
        offsets.push_back(base + lt);
        pos = closePos + closer.size();
    }

    if (auto problem = find_order_problem(paragraph.segments))
    {
        auto const offset = problem->index < offsets.size() ? offsets[problem->index] : base + chunk.size();
        return unexpected(error_at(problem->kind, id, offset, problem->detail));
    }
    return paragraph;
}

} // namespace

auto tag_name(SegmentKind kind) -> std::string_view
{
    switch (kind)
    {
        case SegmentKind::Planning: return "planning";
        case SegmentKind::ToolCall: return "tool_call";
        case SegmentKind::ToolResponse: return "tool";
        case SegmentKind::Analysis: return "analyze";
        case SegmentKind::Verdict: return "verify";
    }
    return "planning";
}

auto open_tag(SegmentKind kind) -> std::string
{
    return "<" + std::string(tag_name(kind)) + ">";
}

auto close_tag(SegmentKind kind) -> std::string
{
    return "</" + std::string(tag_name(kind)) + ">";
}

auto to_string(FormatErrorKind kind) -> std::string_view
{
    switch (kind)
    {
        case FormatErrorKind::MissingHeader: return "missing_header";
        case FormatErrorKind::UnclosedTag: return "unclosed_tag";
        case FormatErrorKind::OutOfOrderSegment: return "out_of_order_segment";
        case FormatErrorKind::MissingVerdict: return "missing_verdict";
        case FormatErrorKind::BadVerdictToken: return "bad_verdict_token";
        case FormatErrorKind::DuplicateParagraphId: return "duplicate_paragraph_id";
        case FormatErrorKind::NoncontiguousIds: return "noncontiguous_ids";
        case FormatErrorKind::ParagraphCountMismatch: return "paragraph_count_mismatch";
    }
    return "unknown";
}

auto ParagraphVerification::tool_call_count() const -> std::size_t
{
    return static_cast<std::size_t>(std::count_if(segments.begin(), segments.end(),
                                                  [](const Segment& s) { return s.kind == SegmentKind::ToolCall; }));
}

auto Trajectory::verdicts() const -> std::vector<Verdict>
{
    auto out = std::vector<Verdict> {};
    out.reserve(paragraphs.size());
    for (auto const& p: paragraphs)
        out.push_back(p.verdict);
    return out;
}

auto scan_trajectory(std::string_view raw) -> TrajectoryScan
{
    auto scan = TrajectoryScan {};
    auto const headers = find_headers(raw);
    if (headers.empty())
    {
        scan.errors.push_back(error_at(FormatErrorKind::MissingHeader, std::nullopt, 0, "no '### Paragraph N' header"));
        return scan;
    }

    auto seen = std::set<int> {};
    auto expected = 1;
    for (auto i = std::size_t { 0 }; i < headers.size(); ++i)
    {
        auto const& h = headers[i];
        if (!h.id)
        {
            scan.errors.push_back(
                error_at(FormatErrorKind::MissingHeader, std::nullopt, h.line_begin, "malformed paragraph header"));
            continue;
        }
        auto const end = i + 1 < headers.size() ? headers[i + 1].line_begin : raw.size();
        auto const id = *h.id;

        if (seen.contains(id))
            scan.errors.push_back(error_at(FormatErrorKind::DuplicateParagraphId, id, h.line_begin,
                                           "paragraph " + std::to_string(id) + " repeated"));
        else if (id != expected)
            scan.errors.push_back(error_at(FormatErrorKind::NoncontiguousIds, id, h.line_begin,
                                           "expected paragraph " + std::to_string(expected)));
        seen.insert(id);
        expected = std::max(expected, id + 1);

        auto parsed = parse_chunk(raw.substr(h.body_begin, end - h.body_begin), h.body_begin, id);
        if (parsed)
            scan.paragraphs.push_back(std::move(*parsed));
        else
            scan.errors.push_back(std::move(parsed.error()));
    }
    std::stable_sort(scan.errors.begin(), scan.errors.end(),
                     [](const FormatError& a, const FormatError& b) { return a.offset < b.offset; });
    return scan;
}

auto parse_trajectory(std::string_view raw) -> Expected<Trajectory, FormatError>
{
    auto scan = scan_trajectory(raw);
    if (!scan.errors.empty())
        return unexpected(std::move(scan.errors.front()));
    return Trajectory { std::move(scan.paragraphs) };
}

auto parse_paragraph(std::string_view raw) -> Expected<ParagraphVerification, FormatError>
{
    auto const headers = find_headers(raw);
    if (headers.empty() || !headers.front().id)
        return unexpected(error_at(FormatErrorKind::MissingHeader, std::nullopt, headers.empty() ? 0 : headers[0].line_begin,
                                   "no '### Paragraph N' header"));
    if (headers.size() > 1)
        return unexpected(error_at(FormatErrorKind::DuplicateParagraphId, headers[1].id, headers[1].line_begin,
                                   "more than one paragraph header"));
    auto const& h = headers.front();
    return parse_chunk(raw.substr(h.body_begin), h.body_begin, *h.id);
}

auto render_paragraph(const ParagraphVerification& paragraph) -> std::string
{
    auto out = std::string(HeaderPrefix) + std::to_string(paragraph.paragraph_id) + "\n";
    for (auto const& s: paragraph.segments)
        out += "\n" + open_tag(s.kind) + "\n" + s.body + "\n" + close_tag(s.kind) + "\n";
    return out;
}

auto render_trajectory(const Trajectory& trajectory) -> std::string
{
    auto out = std::string {};
    for (auto const& p: trajectory.paragraphs)
    {
        if (!out.empty())
            out += "\n";
        out += render_paragraph(p);
    }
    return out;
}

auto check_segment_order(const std::vector<Segment>& segments) -> std::optional<FormatError>
{
    auto problem = find_order_problem(segments);
    if (!problem)
        return std::nullopt;
    return FormatError { .kind = problem->kind, .detail = problem->detail, .got = problem->index };
}

auto validate_format(const Trajectory& trajectory, std::size_t expected_steps) -> std::vector<FormatError>
{
    auto violations = std::vector<FormatError> {};
    auto const& paragraphs = trajectory.paragraphs;

    if (paragraphs.size() != expected_steps)
        violations.push_back(FormatError {
            .kind = FormatErrorKind::ParagraphCountMismatch,
            .detail = "got " + std::to_string(paragraphs.size()) + " paragraphs, want " + std::to_string(expected_steps),
            .got = paragraphs.size(),
            .want = expected_steps,
        });

    auto seen = std::set<int> {};
    for (auto i = std::size_t { 0 }; i < paragraphs.size(); ++i)
    {
        auto const& p = paragraphs[i];
        auto const id = p.paragraph_id;
        if (seen.contains(id))
            violations.push_back(FormatError { .kind = FormatErrorKind::DuplicateParagraphId, .paragraph_id = id });
        else if (id != static_cast<int>(i) + 1)
            violations.push_back(FormatError {
                .kind = FormatErrorKind::NoncontiguousIds,
                .paragraph_id = id,
                .detail = "expected paragraph " + std::to_string(i + 1),
            });
        seen.insert(id);

        if (auto problem = check_segment_order(p.segments))
        {
            problem->paragraph_id = id;
            violations.push_back(std::move(*problem));
        }
        else
        {
            auto const& last = p.segments.back();
            auto const token = parse_verdict(last.body);
            if (!token || last.body != to_token(*token))
                violations.push_back(FormatError {
                    .kind = FormatErrorKind::BadVerdictToken,
                    .paragraph_id = id,
                    .detail = "verdict body '" + last.body + "' is not canonical",
                });
            else if (*token != p.verdict)
                violations.push_back(FormatError {
                    .kind = FormatErrorKind::BadVerdictToken,
                    .paragraph_id = id,
                    .detail = "verdict field disagrees with <verify> body",
                });
        }
    }
    return violations;
}

} // namespace tim
