#include <iostream>
#include <string>
#include <vector>

#include "postdiff/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return postdiff::cli_main(args, std::cout, std::cerr);
}
