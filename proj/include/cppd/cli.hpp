#pragma once

#include <string>
#include <vector>

namespace cppd {

/// Entry point of the `cppd` tool; returns the process exit code.
int cli_main(int argc, const char* const* argv);
int cli_main(const std::vector<std::string>& args);

}  // namespace cppd
