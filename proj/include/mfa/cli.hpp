#pragma once

#include <ostream>

namespace mfa {

/// Exit codes of every command.
enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitRuntime = 2 };

/// Entry point of the mfanet tool. Machine-readable results go to `out` as one JSON object;
/// diagnostics and progress go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mfa
