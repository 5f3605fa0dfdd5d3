#include <iostream>
#include <string>
#include <vector>

#include "dynerr/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return dynerr::run_cli(args, std::cout, std::cerr);
}
