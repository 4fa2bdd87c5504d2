#pragma once

#include <ostream>

namespace mesreg::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 2;
inline constexpr int kDataError = 3;
inline constexpr int kEstimationError = 4;

/// Parses arguments and runs one subcommand. Results go to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mesreg::cli
