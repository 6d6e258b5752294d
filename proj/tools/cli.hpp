#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cicle::cli {

// Runs one command line (args[0] is the program name). Returns 0 on
// success, 1 on runtime failure and 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cicle::cli
