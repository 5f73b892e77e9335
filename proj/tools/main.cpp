#include <iostream>

#include "tfcount/cli.hpp"

int main(int argc, char** argv) {
  return tfcount::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
