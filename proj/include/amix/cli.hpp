#pragma once

// Command dispatch for the amixlab tool:
//   amixlab <command> --config <path> [--out <dir>] [--seed <u64>]
// Commands: gen-data, train-gan, train-classifier, eval, inspect.

#include <ostream>
#include <string>
#include <vector>

namespace amix {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Runs one command. `args` excludes the program name. Never throws;
/// failures are reported on `err` and mapped to an exit code.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace amix
