#include <iostream>

#include "hypervox/cli.hpp"

int main(int argc, char** argv) { return hypervox::run_cli(argc, argv, std::cout, std::cerr); }
