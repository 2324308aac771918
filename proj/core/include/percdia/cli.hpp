#pragma once

#include <string>
#include <vector>

namespace percdia::cli {

// Runs one CLI invocation (argv without the program name). Returns the exit
// code: 0 success, 1 runtime error, 2 usage error. Errors go to stderr.
int run(const std::vector<std::string>& args);

}  // namespace percdia::cli
