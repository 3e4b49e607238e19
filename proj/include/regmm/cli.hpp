#pragma once

namespace regmm {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitNotConverged = 2,
  /// A checked inequality or tolerance failed.
  kExitCheckFailed = 3,
};

/// Parses argv and runs one of solve, verify, stability, roundtrip, sweep.
int dispatch(int argc, const char* const* argv);

}  // namespace regmm
