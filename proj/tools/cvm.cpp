#include <iostream>
#include <string>
#include <vector>

#include "cvm/cli.hpp"

int main(int argc, char** argv) {
    return cvm::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
