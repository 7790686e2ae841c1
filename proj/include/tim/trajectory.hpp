// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <tim/expected.hpp>
#include <tim/verdict.hpp>

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tim
{

enum class SegmentKind
{
    Planning,     // <planning>
    ToolCall,     // <tool_call>
    ToolResponse, // <tool>
    Analysis,     // <analyze>
    Verdict,      // <verify>
};

auto tag_name(SegmentKind kind) -> std::string_view;
auto open_tag(SegmentKind kind) -> std::string;
auto close_tag(SegmentKind kind) -> std::string;

struct Segment
{
    SegmentKind kind;
    /// Trimmed content between the tags. Verdict bodies are stored as the
    /// canonical uppercase token.
    std::string body;

    auto operator==(const Segment&) const -> bool = default;
};

struct ParagraphVerification
{
    int paragraph_id = 1;
    std::vector<Segment> segments;
    Verdict verdict = Verdict::Correct;

    [[nodiscard]] auto tool_call_count() const -> std::size_t;

    auto operator==(const ParagraphVerification&) const -> bool = default;
};

struct Trajectory
{
    std::vector<ParagraphVerification> paragraphs;

    [[nodiscard]] auto verdicts() const -> std::vector<Verdict>;

    auto operator==(const Trajectory&) const -> bool = default;
};

enum class FormatErrorKind
{
    MissingHeader,
    UnclosedTag,
    OutOfOrderSegment,
    MissingVerdict,
    BadVerdictToken,
    DuplicateParagraphId,
    NoncontiguousIds,
    ParagraphCountMismatch,
};

auto to_string(FormatErrorKind kind) -> std::string_view;

/// A grammar violation. Parse errors carry a byte offset into the raw text;
/// structural violations found by validate_format carry got/want counts
/// where meaningful.
struct FormatError
{
    FormatErrorKind kind;
    std::optional<int> paragraph_id;
    std::size_t offset = 0;
    std::string detail;
    std::size_t got = 0;
    std::size_t want = 0;
};

/// Result of a non-failing scan: every paragraph that parsed cleanly plus
/// every violation encountered, in text order.
struct TrajectoryScan
{
    std::vector<ParagraphVerification> paragraphs;
    std::vector<FormatError> errors;
};

auto scan_trajectory(std::string_view raw) -> TrajectoryScan;

/// Strict parse: the first violation (by text position) aborts.
auto parse_trajectory(std::string_view raw) -> Expected<Trajectory, FormatError>;

/// Parses one `### Paragraph N` block; the id is not checked for
/// contiguity.
auto parse_paragraph(std::string_view raw) -> Expected<ParagraphVerification, FormatError>;

auto render_paragraph(const ParagraphVerification& paragraph) -> std::string;
auto render_trajectory(const Trajectory& trajectory) -> std::string;

/// Reports every violation; an empty result means the trajectory is valid
/// and has exactly `expected_steps` paragraphs.
auto validate_format(const Trajectory& trajectory, std::size_t expected_steps) -> std::vector<FormatError>;

/// Checks workflow order: Planning, (ToolCall ToolResponse)*, Analysis, Verdict.
auto check_segment_order(const std::vector<Segment>& segments) -> std::optional<FormatError>;

} // namespace tim
