#ifndef SYSRISK_TOOLS_CLI_HPP
#define SYSRISK_TOOLS_CLI_HPP

#include <iosfwd>

namespace sysrisk::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kInfeasible = 2, kNotConverged = 3 };

/// Entire command line front end; writes CSV to --out or `out`, diagnostics to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sysrisk::cli

#endif  // SYSRISK_TOOLS_CLI_HPP
