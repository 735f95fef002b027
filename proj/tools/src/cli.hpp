#pragma once
// Command-line experiment runner.

#include <string>
#include <vector>

namespace nlreg::cli {

enum ExitCode : int {
    ok = 0,
    internal_error = 1,
    config_error = 2,
    parameter_error = 3,
    verification_failure = 4,
    accuracy_error = 5,
};

/// Runs one subcommand. args excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace nlreg::cli
