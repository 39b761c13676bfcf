#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mapxtab::cli {

/// Exit codes shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kIo = 2,
  kValidation = 3,
};

/// Parses `args` (args[0] is the program name) and runs one subcommand.
/// Normal output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mapxtab::cli
