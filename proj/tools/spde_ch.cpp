#include <iostream>

#include "run.hpp"

int main(int argc, char** argv) { return spde::cli::main_entry(argc, argv, std::cout, std::cerr); }
