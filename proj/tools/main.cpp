#include <string>
#include <vector>

#include "ehrcvd_cli/cli.hpp"

int main(int argc, char** argv) {
  return ehrcvd::cli::run(std::vector<std::string>(argv, argv + argc));
}
