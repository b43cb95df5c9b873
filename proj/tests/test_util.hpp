#pragma once

#include <cstdint>
#include <random>

#include "lossim/image.hpp"

namespace lossim::test {

// Uniform [lo, hi) samples from a fixed seed.
inline ImageBuffer random_image(int h, int w, int ch, uint64_t seed, double lo = 0.0,
                                double hi = 1.0) {
  std::mt19937_64 rng(seed);
  ImageBuffer img(h, w, ch);
  for (size_t i = 0; i < img.size(); ++i) {
    img[i] = lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  }
  return img;
}

inline double max_abs(const ImageBuffer& img) {
  double m = 0.0;
  for (size_t i = 0; i < img.size(); ++i) m = std::max(m, std::abs(img[i]));
  return m;
}

// Max relative error between two gradient fields; entries below `floor` in
// both are compared absolutely against the same floor.
inline double max_rel_error(const ImageBuffer& a, const ImageBuffer& b, double floor = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

}  // namespace lossim::test
