#include <string>
#include <vector>

#include "vwap/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vwap::cli::run(args);
}
