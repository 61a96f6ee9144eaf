#include "commands.hpp"

int main(int argc, char** argv) {
  return shardsearch::cli::run_command(std::vector<std::string>(argv, argv + argc));
}
