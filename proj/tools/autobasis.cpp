#include <iostream>
#include <string>
#include <vector>

#include "autobasis/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    const int code = autobasis::cli::run(args, std::cout, std::cerr);
    std::cout.flush();
    return code;
}
