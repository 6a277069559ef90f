#pragma once

#include <string>
#include <vector>

namespace softcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Runs one command line (without the program name). Returns the exit code.
int run(const std::vector<std::string>& args);

}  // namespace softcl::cli
