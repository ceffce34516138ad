#pragma once

#include <ostream>

namespace flowact::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitIo = 1;
inline constexpr int kExitDomain = 2;
inline constexpr int kExitPlanning = 3;

/// Parses the command line, runs one command and maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flowact::cli
