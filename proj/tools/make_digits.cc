// Writes a procedurally generated digit corpus in IDX image format. Stands in
// for the real MNIST files when the canonical download is unreachable; the
// rest of the toolkit consumes the output exactly like the original data.

#include <CLI11.hpp>

#include <cstdio>

#include "restore/data.hh"
#include "restore/digits.hh"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic digit corpus in IDX format"};
  std::string out = "digits-idx3-ubyte";
  std::size_t n = 4000;
  std::uint64_t seed = 1;
  app.add_option("--out", out, "Output IDX path");
  app.add_option("--n", n, "Number of images");
  app.add_option("--seed", seed, "Generator seed");
  CLI11_PARSE(app, argc, argv);

  try {
    restore::write_idx(out, restore::make_digit_corpus(n, seed), n);
  } catch (const restore::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  std::printf("wrote %zu images to %s\n", n, out.c_str());
  return 0;
}
