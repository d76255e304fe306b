#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace gmaw::cli {

/// Runs one CLI invocation; `args` excludes the program name. Returns the
/// process exit code (0 ok, 2 validation, 3 convergence, 4 data shape, 1 other).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmaw::cli
