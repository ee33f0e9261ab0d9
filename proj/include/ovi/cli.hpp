#pragma once

#include <string>
#include <vector>

namespace ovi {

/// Entry point of the `ovi` tool. Returns the process exit code:
/// 0 success, 1 I/O, 2 configuration or validation, 3 numeric failure.
int run_cli(int argc, char** argv);
/// Same, from an argument list that excludes the program name.
int run_cli(const std::vector<std::string>& args);

} // namespace ovi
