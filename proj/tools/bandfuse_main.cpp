#include "bandfuse/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return bandfuse::run_cli(argc, argv, std::cout, std::cerr); }
