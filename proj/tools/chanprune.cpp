#include <iostream>
#include <string>
#include <vector>

#include "chanprune/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return chanprune::run_cli(args, std::cout, std::cerr);
}
