#include <iostream>

#include "cpmtl/cli.hpp"

int main(int argc, char** argv) { return cpmtl::run_cli(argc, argv, std::cout, std::cerr); }
