#include <iostream>

#include "capsgram/experiment/commands.hpp"

int main(int argc, char** argv) { return capsgram::run_cli(argc, argv, std::cout, std::cerr); }
