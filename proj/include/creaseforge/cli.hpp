#pragma once

#include <string>
#include <vector>

namespace creaseforge {

/// Runs one subcommand. Returns 0 on success, 1 on a usage error and 2 on a
/// data error. args[0] is the program name.
int cli_dispatch(const std::vector<std::string>& args);
int cli_dispatch(int argc, char** argv);

}  // namespace creaseforge
