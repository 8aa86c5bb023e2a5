#include <iostream>

#include "monoreg/harness.hpp"

int main(int argc, char** argv) { return monoreg::cli::run_cli(argc, argv, std::cout, std::cerr); }
