#pragma once

#include <exception>
#include <iosfwd>
#include <string>
#include <vector>

namespace treexfer::cli {

// Runs one command line (args excludes the program name). Returns the
// process exit code: 0 ok, 2 input error, 3 state error, 4 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int exit_code_for(const std::exception& e);

}  // namespace treexfer::cli
