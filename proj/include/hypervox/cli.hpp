#pragma once

#include <ostream>

namespace hypervox {

/// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitInternal = 1, kExitInput = 2, kExitArchitecture = 3 };

/// Entry point of the `hypervox` tool; subcommands train, eval, transfer,
/// trace, classify and sweep. Failures print one line
///   error: kind=<input|architecture|internal> code=<n> message="..."
/// to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hypervox
