#include <iostream>

#include "rectnet/cli.hpp"

int main(int argc, char** argv) { return rectnet::run_cli(argc, argv, std::cout, std::cerr); }
