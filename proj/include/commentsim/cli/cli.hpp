#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace commentsim::cli {

/// Runs the command-line driver. `args` excludes the program name. Results go
/// to `out`, progress and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace commentsim::cli
