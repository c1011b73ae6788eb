#include <vector>

#include "zfda/cli.hpp"

int main(int argc, char** argv) {
    return zfda::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
