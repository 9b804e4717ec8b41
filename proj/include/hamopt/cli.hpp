#pragma once

#include <string>
#include <vector>

namespace hamopt::cli {

// Exit codes: 0 success, 1 domain error, 2 usage error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

int run(int argc, const char* const* argv);
// `args` excludes the program name.
int run(const std::vector<std::string>& args);

}  // namespace hamopt::cli
