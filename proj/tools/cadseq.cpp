#include <malloc.h>

#include <string>
#include <vector>

#include "cadseq/cli/cli.hpp"

int main(int argc, char** argv) {
  // Keep large activation buffers on the heap instead of fresh mmaps per step.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return cadseq::cli::run(std::vector<std::string>(argv, argv + argc));
}
