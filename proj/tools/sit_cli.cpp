#include <iostream>

#include "sit/cli.hpp"

int main(int argc, char** argv) { return sit::cli_main(argc, argv, std::cout, std::cerr); }
