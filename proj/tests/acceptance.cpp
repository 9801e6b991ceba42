// Acceptance run: one PASS/FAIL line per criterion.
//   acceptance                 all criteria
//   acceptance --criterion N   just N (used by ctest)

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>
#include <vector>

#include "acceptance_checks.hpp"

int main(int argc, char** argv) {
  std::vector<int> ids;
  blo::acceptance::Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--criterion" && i + 1 < argc) {
      ids.push_back(std::atoi(argv[++i]));
    } else if (a == "--mnist-dir" && i + 1 < argc) {
      opt.mnist_dir = argv[++i];
    } else if (a == "--quick") {
      opt.skip_long = true;
    } else {
      std::cerr << "usage: acceptance [--criterion N]... [--mnist-dir DIR] [--quick]\n";
      return 2;
    }
  }
  return blo::acceptance::run_and_print(ids, opt, std::cout) ? 0 : 1;
}
