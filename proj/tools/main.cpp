#include <string>
#include <vector>

#include "eventformer/cli.hpp"

int main(int argc, char** argv) {
  return evf::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
