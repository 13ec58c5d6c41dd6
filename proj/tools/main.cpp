#include <iostream>

#include "flowmob/cli.hpp"

int main(int argc, char** argv) { return flowmob::run_cli(argc, argv, std::cout, std::cerr); }
