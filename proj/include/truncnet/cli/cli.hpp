#pragma once

#include <string>
#include <vector>

namespace truncnet {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// Runs the `truncnet` command line (arguments exclude the program name)
/// and returns its exit code. Subcommands: synth, train, eval, analyze, cam.
int run_cli(const std::vector<std::string>& args);

}  // namespace truncnet
