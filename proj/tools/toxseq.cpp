#include <iostream>
#include <string>
#include <vector>

#include "toxseq/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return toxseq::run_cli(args, std::cout, std::cerr);
}
