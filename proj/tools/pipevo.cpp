#include <iostream>

#include "pipevo/cli.hpp"

int main(int argc, char** argv) {
    return pipevo::run_cli(argc, argv, std::cout, std::cerr);
}
