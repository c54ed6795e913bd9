#include <vector>

#include "eyesim/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return eyesim::dispatch(std::move(args));
}
