#include <vector>

#include "bifleet/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return bifleet::dispatch(args);
}
