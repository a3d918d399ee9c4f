#include <iostream>

#include "tsclab/commands.hpp"

int main(int argc, char** argv) {
  return tsclab::run_cli(argc, argv, std::cout, std::cerr);
}
