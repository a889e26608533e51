#include <iostream>

#include "cdgmae_cli/cli.hpp"

int main(int argc, char** argv) { return cdgmae::cli::main_entry(argc, argv, std::cout, std::cerr); }
