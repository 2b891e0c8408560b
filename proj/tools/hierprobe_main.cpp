#include <iostream>
#include <string>
#include <vector>

#include "hierprobe/cli.hpp"

int main(int argc, char** argv) {
  return hierprobe::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
