#include <iostream>
#include <string>
#include <vector>

#include "gama/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gama::cli::run(args, std::cout, std::cerr);
}
