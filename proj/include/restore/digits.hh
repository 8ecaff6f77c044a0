#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "restore/rng.hh"

namespace restore {

// Procedural 28x28 digit corpus for offline runs: seven-segment-style glyphs
// rendered as soft strokes with per-sample jitter in position, scale, slant,
// thickness and intensity. The lower half of a glyph is predictable from its
// upper half plus the digit's shape, which is exactly the structure an
// inpainting model has to learn. Stored in the same byte layout as the IDX
// image payload.

namespace detail {

struct Seg {
  double x0, y0, x1, y1;
};

// segment layout in a unit box: A top, G middle, D bottom, F/E left halves,
// B/C right halves
inline const std::array<Seg, 7>& segment_geometry() {
  static const std::array<Seg, 7> segs{{
      {0.0, 0.0, 1.0, 0.0},  // A
      {1.0, 0.0, 1.0, 0.5},  // B
      {1.0, 0.5, 1.0, 1.0},  // C
      {0.0, 1.0, 1.0, 1.0},  // D
      {0.0, 0.5, 0.0, 1.0},  // E
      {0.0, 0.0, 0.0, 0.5},  // F
      {0.0, 0.5, 1.0, 0.5},  // G
  }};
  return segs;
}

inline std::uint8_t segment_mask(int digit) {
  //                           ABCDEFG
  static const std::uint8_t masks[10] = {
      0b1111110,  // 0
      0b0110000,  // 1
      0b1101101,  // 2
      0b1111001,  // 3
      0b0110011,  // 4
      0b1011011,  // 5
      0b1011111,  // 6
      0b1110000,  // 7
      0b1111111,  // 8
      0b1111011,  // 9
  };
  return masks[digit];
}

inline double dist_to_segment(double px, double py, const Seg& s) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = t < 0 ? 0 : (t > 1 ? 1 : t);
  const double qx = s.x0 + t * dx, qy = s.y0 + t * dy;
  return std::sqrt((px - qx) * (px - qx) + (py - qy) * (py - qy));
}

}  // namespace detail

/// Renders one jittered digit glyph into a 784-byte image.
inline void render_digit(int digit, Rng& rng, std::uint8_t* out) {
  const double cx = 13.5 + 3.0 * (uniform(rng) - 0.5);      // horizontal drift
  const double cy = 13.5 + 2.0 * (uniform(rng) - 0.5);      // vertical drift
  const double half_w = 4.0 + 1.6 * uniform(rng);           // glyph half extent
  const double half_h = 7.5 + 2.0 * uniform(rng);
  const double slant = 0.25 * (uniform(rng) - 0.5);
  const double thickness = 1.1 + 0.6 * uniform(rng);
  const double peak = 0.75 + 0.25 * uniform(rng);

  const std::uint8_t mask = detail::segment_mask(digit);
  std::array<detail::Seg, 7> segs = detail::segment_geometry();
  for (auto& s : segs) {
    // unit box -> image coordinates, slanted
    auto map = [&](double& x, double& y) {
      double gx = (x - 0.5) * 2.0 * half_w, gy = (y - 0.5) * 2.0 * half_h;
      x = cx + gx + slant * -gy;
      y = cy + gy;
    };
    map(s.x0, s.y0);
    map(s.x1, s.y1);
  }

  for (int py = 0; py < 28; ++py) {
    for (int px = 0; px < 28; ++px) {
      double best = 1e9;
      for (int i = 0; i < 7; ++i)
        if (mask & (1 << (6 - i)))
          best = std::min(best, detail::dist_to_segment(px, py, segs[i]));
      double v = peak * (1.25 - best / thickness);
      v = v < 0 ? 0 : (v > peak ? peak : v);
      out[py * 28 + px] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
  }
}

/// A corpus of n glyphs cycling through the digits, in IDX payload layout.
inline std::vector<std::uint8_t> make_digit_corpus(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::uint8_t> images(n * 784);
  for (std::size_t i = 0; i < n; ++i)
    render_digit(static_cast<int>(uniform_index(rng, 10)), rng, images.data() + i * 784);
  return images;
}

}  // namespace restore
