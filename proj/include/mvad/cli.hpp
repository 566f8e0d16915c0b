#pragma once

// Command-line front end: generate, fit, score, impute, select-k, benchmark.

#include <iosfwd>
#include <string>
#include <vector>

namespace mvad::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace mvad::cli
