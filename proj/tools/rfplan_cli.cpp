#include <string>
#include <vector>

#include "rfplan/app.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return rfplan::run_command(args);
}
