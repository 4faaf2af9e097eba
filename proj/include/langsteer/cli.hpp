#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace langsteer {

// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Parses argv and runs one subcommand. Diagnostics go to `err`, tables and
// summaries to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace langsteer
