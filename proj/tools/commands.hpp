#pragma once

#include <string>
#include <vector>

namespace shardsearch::cli {

/// Entry point of the `shardsearch` tool; `args[0]` is the program name.
/// Returns 0 on success, 1 on a runtime failure and 2 on a usage or
/// configuration error.
int run_command(const std::vector<std::string>& args);

}  // namespace shardsearch::cli
