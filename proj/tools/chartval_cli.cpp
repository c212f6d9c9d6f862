#include "chartval/gateway.hpp"

#include <iostream>

int main(int argc, char** argv) { return chartval::run_cli(argc, argv, std::cout, std::cerr); }
