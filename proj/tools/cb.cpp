#include <iostream>

#include "cb/cli.hpp"

int main(int argc, char** argv) { return cb::run_cli(argc, argv, std::cout, std::cerr); }
