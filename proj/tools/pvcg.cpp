#include <iostream>

#include "pvcg/cli.hpp"

int main(int argc, char** argv) { return pvcg::cli::run(argc, argv, std::cout, std::cerr); }
