#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gridfield::cli {

enum ExitCode : int { ok = 0, config_error = 2, numerical_failure = 3, non_convergence = 4 };

/// A run finished but did not reach the requested stationarity.
class NonConvergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses argv, runs one subcommand and maps failures to exit codes.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);

}  // namespace gridfield::cli
