#include <string>
#include <vector>

#include "oos/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return oos::cli::run(args);
}
