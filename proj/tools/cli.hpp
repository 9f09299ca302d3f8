#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stealthlink::cli {

// Parses argv, runs one command and returns the process exit code
// (0 ok, 2 usage, 3 data, 4 divergence). Diagnostics go to `err`,
// human-readable results to `out`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stealthlink::cli
