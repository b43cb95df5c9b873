#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossim/image.hpp"

namespace lossim {

/// Deterministic standard-normal stream: mt19937_64 bits through Box-Muller,
/// so outputs do not depend on the standard library's distribution internals.
class NormalSource {
 public:
  explicit NormalSource(uint64_t seed) : rng_(seed) {}

  double next() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double mag = std::sqrt(-2.0 * std::log(u1));
    spare_ = mag * std::sin(2.0 * M_PI * u2);
    have_spare_ = true;
    return mag * std::cos(2.0 * M_PI * u2);
  }

  uint64_t raw() { return rng_(); }

 private:
  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

enum class NoiseModel { HeteroscedasticGaussian, Poisson };

/// Signal-dependent sensor noise: variance a*y + b per sample, clipped to
/// [0,1]. The default model is the Gaussian approximation; Poisson draws the
/// shot component exactly (a * Poisson(y/a) keeps the same second moments).
inline ImageBuffer apply_noise(const ImageBuffer& img, double a, double b, uint64_t seed,
                               NoiseModel model = NoiseModel::HeteroscedasticGaussian) {
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("apply_noise: negative variance parameter");
  ImageBuffer out = img;
  if (a == 0.0 && b == 0.0) return out;
  NormalSource normals(seed);
  std::mt19937_64 poisson_rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (size_t i = 0; i < out.size(); ++i) {
    const double y = img[i];
    double v;
    if (model == NoiseModel::HeteroscedasticGaussian || a == 0.0) {
      v = y + std::sqrt(std::max(0.0, a * y + b)) * normals.next();
    } else {
      std::poisson_distribution<long> shot(std::max(0.0, y) / a);
      v = a * static_cast<double>(shot(poisson_rng));
      if (b > 0.0) v += std::sqrt(b) * normals.next();
    }
    out[i] = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

enum class BayerPattern { RGGB, BGGR, GRBG, GBRG };

inline BayerPattern bayer_from_name(const std::string& name) {
  if (name == "rggb") return BayerPattern::RGGB;
  if (name == "bggr") return BayerPattern::BGGR;
  if (name == "grbg") return BayerPattern::GRBG;
  if (name == "gbrg") return BayerPattern::GBRG;
  throw std::invalid_argument("unknown Bayer pattern: " + name);
}

/// Channel sampled at phase (row%2, col%2) of the 2x2 cell.
inline int bayer_channel(BayerPattern pattern, int row, int col) {
  static constexpr int kCell[4][2][2] = {
      {{0, 1}, {1, 2}},  // RGGB
      {{2, 1}, {1, 0}},  // BGGR
      {{1, 0}, {2, 1}},  // GRBG
      {{1, 2}, {0, 1}},  // GBRG
  };
  return kCell[static_cast<int>(pattern)][row & 1][col & 1];
}

inline ImageBuffer mosaic_bayer(const ImageBuffer& img, BayerPattern pattern = BayerPattern::RGGB) {
  if (img.channels() != 3) throw std::invalid_argument("mosaic_bayer: 3-channel input required");
  if (img.height() % 2 != 0 || img.width() % 2 != 0) {
    throw std::invalid_argument("mosaic_bayer: even dimensions required");
  }
  ImageBuffer out(img.height(), img.width(), 1);
  for (int r = 0; r < img.height(); ++r)
    for (int c = 0; c < img.width(); ++c) out.at(r, c) = img.at(r, c, bayer_channel(pattern, r, c));
  return out;
}

/// Missing colors from the average of the nearest in-bounds same-color
/// neighbors: the 4-neighborhood where the color lives there, the diagonals
/// otherwise. Known samples pass through exactly.
inline ImageBuffer demosaic_bilinear(const ImageBuffer& mosaic,
                                     BayerPattern pattern = BayerPattern::RGGB) {
  if (mosaic.channels() != 1) throw std::invalid_argument("demosaic_bilinear: 1-channel input required");
  if (mosaic.height() % 2 != 0 || mosaic.width() % 2 != 0) {
    throw std::invalid_argument("demosaic_bilinear: even dimensions required");
  }
  const int h = mosaic.height(), w = mosaic.width();
  ImageBuffer out(h, w, 3);
  static constexpr int kCross[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
  static constexpr int kDiag[4][2] = {{-1, -1}, {-1, 1}, {1, -1}, {1, 1}};

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const int own = bayer_channel(pattern, r, c);
      out.at(r, c, own) = mosaic.at(r, c);
      for (int ch = 0; ch < 3; ++ch) {
        if (ch == own) continue;
        double sum = 0.0;
        int count = 0;
        for (const auto& d : kCross) {
          const int rr = r + d[0], cc = c + d[1];
          if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
          if (bayer_channel(pattern, rr, cc) != ch) continue;
          sum += mosaic.at(rr, cc);
          ++count;
        }
        if (count == 0) {
          for (const auto& d : kDiag) {
            const int rr = r + d[0], cc = c + d[1];
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            if (bayer_channel(pattern, rr, cc) != ch) continue;
            sum += mosaic.at(rr, cc);
            ++count;
          }
        }
        out.at(r, c, ch) = count > 0 ? sum / count : mosaic.at(r, c);
      }
    }
  }
  return out;
}

enum class ResampleDirection { Down, Up };

/// Down: box average of scale x scale blocks. Up: bilinear with half-pixel
/// aligned sample positions, back to size * scale.
inline ImageBuffer resample_bilinear(const ImageBuffer& img, int scale,
                                     ResampleDirection direction) {
  if (scale < 2) throw std::invalid_argument("resample_bilinear: scale must be >= 2");
  if (direction == ResampleDirection::Down) {
    if (img.height() % scale != 0 || img.width() % scale != 0) {
      throw std::invalid_argument("resample_bilinear: dimensions not divisible by scale");
    }
    const int h = img.height() / scale, w = img.width() / scale;
    ImageBuffer out(h, w, img.channels());
    const double inv = 1.0 / (static_cast<double>(scale) * scale);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        for (int ch = 0; ch < img.channels(); ++ch) {
          double sum = 0.0;
          for (int i = 0; i < scale; ++i)
            for (int j = 0; j < scale; ++j) sum += img.at(r * scale + i, c * scale + j, ch);
          out.at(r, c, ch) = sum * inv;
        }
    return out;
  }

  const int h = img.height() * scale, w = img.width() * scale;
  ImageBuffer out(h, w, img.channels());
  for (int r = 0; r < h; ++r) {
    const double sr = (r + 0.5) / scale - 0.5;
    const int r0 = std::clamp(static_cast<int>(std::floor(sr)), 0, img.height() - 1);
    const int r1 = std::min(r0 + 1, img.height() - 1);
    const double fr = std::clamp(sr - r0, 0.0, 1.0);
    for (int c = 0; c < w; ++c) {
      const double sc = (c + 0.5) / scale - 0.5;
      const int c0 = std::clamp(static_cast<int>(std::floor(sc)), 0, img.width() - 1);
      const int c1 = std::min(c0 + 1, img.width() - 1);
      const double fc = std::clamp(sc - c0, 0.0, 1.0);
      for (int ch = 0; ch < img.channels(); ++ch) {
        const double top = (1.0 - fc) * img.at(r0, c0, ch) + fc * img.at(r0, c1, ch);
        const double bot = (1.0 - fc) * img.at(r1, c0, ch) + fc * img.at(r1, c1, ch);
        out.at(r, c, ch) = (1.0 - fr) * top + fr * bot;
      }
    }
  }
  return out;
}

enum class CorruptionKind { NoiseBayer, SuperRes, ExternalPairs };

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::NoiseBayer;
  double a = 0.005;
  double b = 0.0001;
  BayerPattern pattern = BayerPattern::RGGB;
  int scale = 2;
  uint64_t seed = 0;
  NoiseModel noise_model = NoiseModel::HeteroscedasticGaussian;
};

struct TrainingPair {
  ImageBuffer input;
  ImageBuffer target;
};

/// Full-image corruption for one clean image; the per-image seed is
/// spec.seed xor the image index.
inline ImageBuffer corrupt_image(const ImageBuffer& clean, const CorruptionSpec& spec,
                                 size_t image_index = 0) {
  switch (spec.kind) {
    case CorruptionKind::NoiseBayer: {
      const ImageBuffer noisy =
          apply_noise(clean, spec.a, spec.b, spec.seed ^ image_index, spec.noise_model);
      return demosaic_bilinear(mosaic_bayer(noisy, spec.pattern), spec.pattern);
    }
    case CorruptionKind::SuperRes:
      return resample_bilinear(resample_bilinear(clean, spec.scale, ResampleDirection::Down),
                               spec.scale, ResampleDirection::Up);
    case CorruptionKind::ExternalPairs:
      throw std::invalid_argument("corrupt_image: external pairs are supplied, not synthesized");
  }
  throw std::logic_error("corrupt_image: unreachable");
}

/// Aligned (corrupted, clean) patch pairs on the stride grid, image-major then
/// row-major patch order.
inline std::vector<TrainingPair> make_dataset(const std::vector<ImageBuffer>& cleans,
                                              const CorruptionSpec& spec, int patch, int stride) {
  std::vector<TrainingPair> pairs;
  for (size_t i = 0; i < cleans.size(); ++i) {
    const ImageBuffer corrupted = corrupt_image(cleans[i], spec, i);
    auto inputs = extract_patches(corrupted, patch, stride);
    auto targets = extract_patches(cleans[i], patch, stride);
    for (size_t p = 0; p < inputs.size(); ++p) {
      pairs.push_back({std::move(inputs[p]), std::move(targets[p])});
    }
  }
  return pairs;
}

/// Pre-corrupted (input, target) file pairs, e.g. JPEG-deblocked externally.
inline std::vector<TrainingPair> make_dataset_external(const std::vector<ImageBuffer>& inputs,
                                                       const std::vector<ImageBuffer>& targets,
                                                       int patch, int stride) {
  if (inputs.size() != targets.size()) {
    throw std::invalid_argument("make_dataset_external: list size mismatch");
  }
  std::vector<TrainingPair> pairs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    require_same_shape(inputs[i], targets[i], "make_dataset_external");
    auto in_patches = extract_patches(inputs[i], patch, stride);
    auto tg_patches = extract_patches(targets[i], patch, stride);
    for (size_t p = 0; p < in_patches.size(); ++p) {
      pairs.push_back({std::move(in_patches[p]), std::move(tg_patches[p])});
    }
  }
  return pairs;
}

/// Manifest: one "input_path<TAB>target_path" line per pair.
inline void write_manifest(const std::string& path,
                           const std::vector<std::pair<std::string, std::string>>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest: " + path);
  for (const auto& [input, target] : entries) out << input << "\t" << target << "\n";
}

inline std::vector<std::pair<std::string, std::string>> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  std::vector<std::pair<std::string, std::string>> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("manifest line missing tab: " + line);
    entries.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return entries;
}

}  // namespace lossim
