#include <string>
#include <vector>

#include "xlmeta/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return xlmeta::cli::run_command(args);
}
