#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace lhz::pipe {

// Entry point of the `lhz` tool. `args` excludes the program name.
// Returns 0 on success, 2 on usage errors or missing input files and 1 on
// other failures, after printing a one-line diagnostic to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lhz::pipe
