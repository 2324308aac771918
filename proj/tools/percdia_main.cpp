#include <string>
#include <vector>

#include "percdia/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return percdia::cli::run(args);
}
