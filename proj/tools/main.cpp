#include <iostream>
#include <string>
#include <vector>

#include "chatasu/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return chatasu::cli::dispatch(args, std::cout, std::cerr);
}
