#include <iostream>

#include "qnet/cli.hpp"

int main(int argc, char** argv) { return qnet::cli::run(argc, argv, std::cout, std::cerr); }
