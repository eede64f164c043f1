#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace radfleet::cli {

/// Runs one invocation. `args` excludes the program name. Returns the process
/// exit code: 0 success, 1 usage error, 2 runtime failure.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace radfleet::cli
