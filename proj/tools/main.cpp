#include <string>
#include <vector>

#include "hdet/cli.hpp"

int main(int argc, char** argv) { return hdet::cli_main(std::vector<std::string>(argv + 1, argv + argc)); }
