#include <iostream>

#include "texadiff/cli.hpp"

int main(int argc, char** argv) { return texadiff::run_cli(argc, argv, std::cout, std::cerr); }
