#include <iostream>
#include <string>
#include <vector>

#include "hsiband/cli.h"

int main(int argc, char** argv) {
  return hsiband::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
