// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <csignal>
#include <iostream>

int main(int argc, char** argv)
{
    std::signal(SIGINT, [](int) { tim::cli::interrupt_flag().store(true); });
    auto args = std::vector<std::string>(argv + 1, argv + argc);
    return tim::cli::run(args, std::cout, std::cerr);
}
