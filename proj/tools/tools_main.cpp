#include <vector>

#include "memjack/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return memjack::cli::run(args);
}
