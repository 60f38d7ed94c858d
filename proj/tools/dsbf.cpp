#include <iostream>
#include <string>
#include <vector>

#include "dsbf/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dsbf::run_cli(args, std::cout, std::cerr);
}
