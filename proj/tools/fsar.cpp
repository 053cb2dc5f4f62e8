#include "fsar/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return fsar::cli_dispatch(argc, argv, std::cout, std::cerr); }
