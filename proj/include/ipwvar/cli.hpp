#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ipwvar {

inline constexpr const char* kToolVersion = "1.0.0";

/// Environment variable consulted for the default seed of `simulate` and `figure`.
inline constexpr const char* kSeedEnvVar = "IPWVAR_SEED";

/// Runs the command line `args` (without the program name).
///
/// Exit codes: 0 success or passing audit, 1 validation or audit failure,
/// 2 usage or parse error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ipwvar
