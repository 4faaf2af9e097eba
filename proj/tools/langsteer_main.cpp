#include <iostream>
#include <string>
#include <vector>

#include "langsteer/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return langsteer::run_cli(args, std::cout, std::cerr);
}
