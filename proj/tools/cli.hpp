#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace streamforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitBenchmarkError = 1;
inline constexpr int kExitBadArguments = 2;

/// Runs the command line `args` (without the program name).
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace streamforge::cli
