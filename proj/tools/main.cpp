#include <string>
#include <vector>

#include "truncnet/cli/cli.hpp"

int main(int argc, char** argv) { return truncnet::run_cli(std::vector<std::string>(argv + 1, argv + argc)); }
