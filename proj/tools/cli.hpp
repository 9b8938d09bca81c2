#pragma once

#include <ostream>

namespace crowdsig::cli {

/// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kPartial = 1;  // finished with warnings recorded in the manifest
inline constexpr int kInvalid = 2;  // bad input or configuration

/// Runs one command line. Normal output goes to `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace crowdsig::cli
