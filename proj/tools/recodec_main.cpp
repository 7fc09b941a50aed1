#include "recodec/cli.hpp"

int main(int argc, char** argv) {
  return recodec::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
