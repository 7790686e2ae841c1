// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace tim::cli
{

enum ExitCode : int
{
    Success = 0,
    Fatal = 1,
    PartialFailure = 2,
};

/// Set from the SIGINT handler; commands stop scheduling work when it is.
auto interrupt_flag() -> std::atomic<bool>&;

/// args excludes the program name. Reports go to `out`, structured log
/// lines to `log`.
auto run(const std::vector<std::string>& args, std::ostream& out, std::ostream& log) -> int;

/// Largest-remainder apportionment of `count` over `fractions` (plus an
/// implicit remainder category, returned last).
auto apportion(std::size_t count, const std::vector<double>& fractions) -> std::vector<std::size_t>;

} // namespace tim::cli
