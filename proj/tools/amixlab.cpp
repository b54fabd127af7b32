#include <iostream>
#include <string>
#include <vector>

#include "amix/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return amix::run_command(args, std::cout, std::cerr);
}
