#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace autobasis::cli {

/// Runs one invocation. args excludes the program name. Returns the exit
/// code: 0 success, 2 usage error, 3 numerical failure, 4 I/O failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace autobasis::cli
