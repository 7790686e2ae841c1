// SPDX-License-Identifier: Apache-2.0
#include <tim/text.hpp>
#include <tim/verdict.hpp>

#include <algorithm>
#include <cctype>

namespace tim::text
{

auto trim(std::string_view s) -> std::string_view
{
    auto const isSpace = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && isSpace(s.front()))
        s.remove_prefix(1);
    while (!s.empty() && isSpace(s.back()))
        s.remove_suffix(1);
    return s;
}

auto to_lower(std::string_view s) -> std::string
{
    auto out = std::string(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

auto iequals(std::string_view a, std::string_view b) -> bool
{
    return a.size() == b.size()
           && std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
                  return std::tolower(x) == std::tolower(y);
              });
}

auto starts_with(std::string_view s, std::string_view prefix) -> bool
{
    return s.substr(0, prefix.size()) == prefix;
}

auto count_occurrences(std::string_view haystack, std::string_view needle) -> std::size_t
{
    if (needle.empty())
        return 0;
    auto count = std::size_t { 0 };
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size()))
        ++count;
    return count;
}

auto extract_integers(std::string_view s) -> std::vector<long long>
{
    auto values = std::vector<long long> {};
    auto i = std::size_t { 0 };
    while (i < s.size())
    {
        if (std::isdigit(static_cast<unsigned char>(s[i])) == 0)
        {
            ++i;
            continue;
        }
        auto value = 0LL;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])) != 0)
            value = value * 10 + (s[i++] - '0');
        values.push_back(value);
    }
    return values;
}

auto join_list(const std::vector<std::string>& items) -> std::string
{
    switch (items.size())
    {
        case 0: return {};
        case 1: return items[0];
        case 2: return items[0] + " and " + items[1];
        default: break;
    }
    auto out = std::string {};
    for (auto i = std::size_t { 0 }; i + 1 < items.size(); ++i)
        out += items[i] + ", ";
    return out + "and " + items.back();
}

} // namespace tim::text

namespace tim
{

auto to_token(Verdict v) -> std::string_view
{
    switch (v)
    {
        case Verdict::Correct: return "CORRECT";
        case Verdict::Neutral: return "NEUTRAL";
        case Verdict::Incorrect: return "INCORRECT";
    }
    return "CORRECT";
}

auto to_name(Verdict v) -> std::string_view
{
    switch (v)
    {
        case Verdict::Correct: return "correct";
        case Verdict::Neutral: return "neutral";
        case Verdict::Incorrect: return "incorrect";
    }
    return "correct";
}

auto parse_verdict(std::string_view text) -> std::optional<Verdict>
{
    auto const token = text::trim(text);
    for (auto v: { Verdict::Correct, Verdict::Neutral, Verdict::Incorrect })
        if (text::iequals(token, to_token(v)))
            return v;
    return std::nullopt;
}

auto verdict_from_numeric(long long code) -> std::optional<Verdict>
{
    switch (code)
    {
        case 1: return Verdict::Correct;
        case 0: return Verdict::Neutral;
        case -1: return Verdict::Incorrect;
        default: return std::nullopt;
    }
}

auto to_numeric(Verdict v) -> int
{
    switch (v)
    {
        case Verdict::Correct: return 1;
        case Verdict::Neutral: return 0;
        case Verdict::Incorrect: return -1;
    }
    return 1;
}

} // namespace tim
