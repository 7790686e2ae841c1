// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string_view>

namespace tim
{

/// Per-step label. Also used for gold annotations, where the numeric
/// encoding is 1 = Correct, 0 = Neutral, -1 = Incorrect.
enum class Verdict
{
    Correct,
    Neutral,
    Incorrect,
};

/// Canonical uppercase token: CORRECT, NEUTRAL, INCORRECT.
auto to_token(Verdict v) -> std::string_view;

/// Lowercase name used in prediction files.
auto to_name(Verdict v) -> std::string_view;

/// Case-insensitive, surrounding whitespace ignored.
auto parse_verdict(std::string_view text) -> std::optional<Verdict>;

auto verdict_from_numeric(long long code) -> std::optional<Verdict>;
auto to_numeric(Verdict v) -> int;

} // namespace tim
