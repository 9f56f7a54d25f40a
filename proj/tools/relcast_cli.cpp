#include <iostream>

#include "relcast/cli.hpp"

int main(int argc, char** argv) { return relcast::cli::dispatch(argc, argv, std::cout, std::cerr); }
