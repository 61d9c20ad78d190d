#include <iostream>

#include "evansbif/cli.hpp"

int main(int argc, char** argv) { return evansbif::cli::run(argc, argv, std::cout, std::cerr); }
