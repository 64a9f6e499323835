#include <iostream>

#include "ammrg/cli.hpp"

int main(int argc, char** argv) { return ammrg::cli::run(argc, argv, std::cout, std::cerr); }
