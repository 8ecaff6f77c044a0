#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "restore/tensor.hh"

namespace restore {

// All randomness flows through these helpers so that seeded runs replay
// bit-identically and engine state can be checkpointed mid-run.
using Rng = std::mt19937_64;

/// Uniform draw in [0,1) from the top 53 bits of the engine output.
inline double uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform index in [0,n) via the multiply-high trick (no modulo bias worth
/// speaking of at 64 bits).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

template <typename T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

/// Uniform Glorot fill: values in [-limit, limit), limit = sqrt(6/(fan_in+fan_out)).
template <typename S>
void glorot_fill(Tensor<S>& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (S& v : t.data) v = static_cast<S>((2.0 * uniform(rng) - 1.0) * limit);
}

inline std::string rng_state_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline Rng rng_from_state_string(const std::string& s) {
  Rng rng;
  std::istringstream is(s);
  is >> rng;
  if (!is) throw DataError("malformed rng state string");
  return rng;
}

}  // namespace restore
