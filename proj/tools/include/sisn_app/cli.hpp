#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace sisn::app {

// Exit codes: 0 success, 1 a library error (printed as
// "error[<kind>]: <message>"), 2 a usage error, 3 a failed gradient check.
inline constexpr int kExitError = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCheckFailed = 3;

// Runs the `sisn` command line. args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sisn::app
