#include "theta_stationary/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return theta_stationary::cli::run(argc, argv, std::cout, std::cerr); }
