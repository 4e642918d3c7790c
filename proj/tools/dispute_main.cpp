#include <vector>

#include "dispute/cli.hpp"

int main(int argc, char** argv) {
  return dispute::run(std::vector<std::string>(argv + 1, argv + argc));
}
