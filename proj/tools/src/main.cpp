#include <iostream>

#include "sdsa_cli/commands.hpp"

int main(int argc, char** argv) { return sdsa::cli::run(argc, argv, std::cout, std::cerr); }
