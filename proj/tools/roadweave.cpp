#include <roadweave/cli.hpp>

int main(int argc, char** argv) {
  return roadweave::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
