#include <iostream>

#include "cadd/cli.hpp"

int main(int argc, char** argv) { return cadd::run_cli(argc, argv, std::cout, std::cerr); }
