#include <iostream>
#include <string>
#include <vector>

#include "lhz/pipeline/cli.hpp"

int main(int argc, char** argv) {
  return lhz::pipe::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
