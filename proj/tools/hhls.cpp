#include <iostream>

#include "hhls/cli.hpp"

int main(int argc, char** argv) { return hhls::cli::main_entry(argc, argv, std::cout, std::cerr); }
