#pragma once

#include <string>
#include <vector>

namespace recodec {

// Runs one CLI invocation in-process. `args` excludes the program name.
// Returns 0 on success, 2 on usage errors, 1 on runtime failures.
int run_cli(const std::vector<std::string>& args);

}  // namespace recodec
