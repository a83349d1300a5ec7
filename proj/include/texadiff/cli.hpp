#pragma once

#include <iosfwd>

namespace texadiff {

// Entry point of the `texadiff` tool. Returns the process exit code:
// 0 ok, 2 I/O or usage, 3 dimension/contract, 4 config, 5 numeric.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace texadiff
