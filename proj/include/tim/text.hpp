// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

// String helpers shared across modules.
namespace tim::text
{

auto trim(std::string_view s) -> std::string_view;
auto to_lower(std::string_view s) -> std::string;
auto iequals(std::string_view a, std::string_view b) -> bool;
auto starts_with(std::string_view s, std::string_view prefix) -> bool;

/// Occurrences of `needle` in `haystack`, non-overlapping.
auto count_occurrences(std::string_view haystack, std::string_view needle) -> std::size_t;

/// All unsigned decimal integers appearing in `s`, in order.
auto extract_integers(std::string_view s) -> std::vector<long long>;

/// "a", "a and b", "a, b, and c".
auto join_list(const std::vector<std::string>& items) -> std::string;

} // namespace tim::text
