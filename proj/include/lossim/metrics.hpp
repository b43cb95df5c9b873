#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossim/gaussian.hpp"
#include "lossim/image.hpp"
#include "lossim/losses.hpp"

namespace lossim {

/// 10*log10(1/MSE) for range-1 images; +inf for identical inputs.
inline double psnr(const ImageBuffer& x, const ImageBuffer& y) {
  require_same_shape(x, y, "psnr");
  double mse = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    mse += d * d;
  }
  mse /= static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// Mean SSIM over all pixels at least one kernel radius from the border,
/// averaged over channels. Full untruncated windows only.
inline double ssim_index(const ImageBuffer& x, const ImageBuffer& y, double sigma = 1.5,
                         const SsimConstants& c = SsimConstants{}) {
  require_same_shape(x, y, "ssim_index");
  const GaussianKernel k = gaussian_kernel(sigma);
  const int r = k.radius;
  if (x.height() < 2 * r + 1 || x.width() < 2 * r + 1) {
    throw std::invalid_argument("ssim_index: image smaller than the kernel window");
  }
  double sum = 0.0;
  long count = 0;
  for (int row = r; row < x.height() - r; ++row)
    for (int col = r; col < x.width() - r; ++col)
      for (int ch = 0; ch < x.channels(); ++ch) {
        sum += ssim_terms(local_moments(x, y, k, row, col, ch), c).ssim;
        ++count;
      }
  return sum / static_cast<double>(count);
}

namespace detail {

inline ImageBuffer downsample_2x(const ImageBuffer& img) {
  const int h = img.height() / 2, w = img.width() / 2;
  ImageBuffer out(h, w, img.channels());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < img.channels(); ++ch)
        out.at(r, c, ch) = 0.25 * (img.at(2 * r, 2 * c, ch) + img.at(2 * r, 2 * c + 1, ch) +
                                   img.at(2 * r + 1, 2 * c, ch) + img.at(2 * r + 1, 2 * c + 1, ch));
  return out;
}

struct LevelMeans {
  double luminance_cs = 0.0;  // mean of l*cs, pooled only at the coarsest level
  double contrast_structure = 0.0;
};

inline LevelMeans ssim_level_means(const ImageBuffer& x, const ImageBuffer& y,
                                   const GaussianKernel& k, const SsimConstants& c) {
  const int r = k.radius;
  if (x.height() < 2 * r + 1 || x.width() < 2 * r + 1) {
    throw std::invalid_argument("msssim_index: level smaller than the kernel window");
  }
  LevelMeans m;
  long count = 0;
  for (int row = r; row < x.height() - r; ++row)
    for (int col = r; col < x.width() - r; ++col)
      for (int ch = 0; ch < x.channels(); ++ch) {
        const SsimTerms t = ssim_terms(local_moments(x, y, k, row, col, ch), c);
        m.luminance_cs += t.luminance * t.contrast_structure;
        m.contrast_structure += t.contrast_structure;
        ++count;
      }
  m.luminance_cs /= static_cast<double>(count);
  m.contrast_structure /= static_cast<double>(count);
  return m;
}

}  // namespace detail

/// True dyadic-pyramid MS-SSIM with all exponents 1: cs averaged per finer
/// level, l*cs pooled at the coarsest level (so levels=1 reduces to
/// ssim_index), 2x average pooling between levels.
inline double msssim_index(const ImageBuffer& x, const ImageBuffer& y, int levels = 3,
                           double sigma = 1.5, const SsimConstants& c = SsimConstants{}) {
  require_same_shape(x, y, "msssim_index");
  if (levels < 1) throw std::invalid_argument("msssim_index: levels must be >= 1");
  const GaussianKernel k = gaussian_kernel(sigma);
  const int min_side = 2 * k.radius + 1;
  if (std::min(x.height(), x.width()) < (min_side << (levels - 1))) {
    throw std::invalid_argument("msssim_index: image too small for requested levels");
  }

  ImageBuffer xs = x, ys = y;
  double cs_product = 1.0;
  detail::LevelMeans level{};
  for (int j = 0; j < levels; ++j) {
    if (j > 0) {
      xs = detail::downsample_2x(xs);
      ys = detail::downsample_2x(ys);
    }
    level = detail::ssim_level_means(xs, ys, k, c);
    if (j + 1 < levels) cs_product *= level.contrast_structure;
  }
  return level.luminance_cs * cs_product;
}

namespace detail {

// Prewitt gradient magnitude of the channel-mean image, replicate borders.
inline ImageBuffer prewitt_magnitude(const ImageBuffer& img) {
  const int h = img.height(), w = img.width();
  ImageBuffer lum(h, w, 1);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      double s = 0.0;
      for (int ch = 0; ch < img.channels(); ++ch) s += img.at(r, c, ch);
      lum.at(r, c) = s / img.channels();
    }
  ImageBuffer mag(h, w, 1);
  auto px = [&](int r, int c) {
    return lum.at(std::clamp(r, 0, h - 1), std::clamp(c, 0, w - 1));
  };
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const double gx = (px(r - 1, c + 1) + px(r, c + 1) + px(r + 1, c + 1) -
                         px(r - 1, c - 1) - px(r, c - 1) - px(r + 1, c - 1)) / 3.0;
      const double gy = (px(r + 1, c - 1) + px(r + 1, c) + px(r + 1, c + 1) -
                         px(r - 1, c - 1) - px(r - 1, c) - px(r - 1, c + 1)) / 3.0;
      mag.at(r, c) = std::sqrt(gx * gx + gy * gy);
    }
  return mag;
}

}  // namespace detail

/// Gradient magnitude similarity deviation on the channel-mean luminance.
/// c defaults to 170/255^2 rescaled for range-1 images.
inline double gmsd(const ImageBuffer& x, const ImageBuffer& y, double c = 0.0026) {
  require_same_shape(x, y, "gmsd");
  if (x.height() < 2 || x.width() < 2) throw std::invalid_argument("gmsd: image too small");
  const ImageBuffer mx = detail::prewitt_magnitude(x);
  const ImageBuffer my = detail::prewitt_magnitude(y);
  const size_t n = mx.size();
  std::vector<double> sim(n);
  double mean = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sim[i] = (2.0 * mx[i] * my[i] + c) / (mx[i] * mx[i] + my[i] * my[i] + c);
    mean += sim[i];
  }
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = sim[i] - mean;
    var += d * d;
  }
  return std::sqrt(var / static_cast<double>(n));
}

/// Per-image metric values plus corpus means, Table-style column conventions:
/// L1 and L2 reported scaled by 1000, infinite PSNR excluded from its mean.
struct MetricReport {
  std::vector<std::string> columns;
  std::vector<std::string> image_names;
  std::vector<std::vector<double>> values;  // [image][column]
  std::vector<double> means;

  void write_csv(std::ostream& out) const {
    out << "image";
    for (const auto& c : columns) out << "," << c;
    out << "\n";
    auto cell = [&](double v) {
      if (std::isinf(v)) {
        out << ",inf";
      } else {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        out << "," << buf;
      }
    };
    for (size_t i = 0; i < image_names.size(); ++i) {
      out << image_names[i];
      for (double v : values[i]) cell(v);
      out << "\n";
    }
    out << "mean";
    for (double v : means) cell(v);
    out << "\n";
  }
};

struct CorpusOptions {
  double ssim_sigma = 1.5;
  int msssim_levels = 3;
  SsimConstants constants{};
};

/// Scores every (restored, reference) pair with the full metric battery.
inline MetricReport evaluate_corpus(
    const std::vector<std::pair<ImageBuffer, ImageBuffer>>& pairs,
    const std::vector<std::string>& names = {}, const CorpusOptions& opt = CorpusOptions{}) {
  if (pairs.empty()) throw std::invalid_argument("evaluate_corpus: empty corpus");
  MetricReport report;
  report.columns = {"1000L2", "PSNR", "1000L1", "SSIM", "MS-SSIM", "GMSD"};
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& [restored, reference] = pairs[i];
    require_same_shape(restored, reference, "evaluate_corpus");
    double l1 = 0.0, l2 = 0.0;
    for (size_t s = 0; s < restored.size(); ++s) {
      const double d = restored[s] - reference[s];
      l1 += std::abs(d);
      l2 += d * d;
    }
    l1 /= static_cast<double>(restored.size());
    l2 /= static_cast<double>(restored.size());
    report.image_names.push_back(i < names.size() ? names[i] : "img" + std::to_string(i));
    report.values.push_back({1000.0 * l2, psnr(restored, reference), 1000.0 * l1,
                             ssim_index(restored, reference, opt.ssim_sigma, opt.constants),
                             msssim_index(restored, reference, opt.msssim_levels, opt.ssim_sigma,
                                          opt.constants),
                             gmsd(restored, reference)});
  }
  report.means.assign(report.columns.size(), 0.0);
  for (size_t col = 0; col < report.columns.size(); ++col) {
    double sum = 0.0;
    long count = 0;
    for (const auto& row : report.values) {
      if (std::isinf(row[col])) continue;  // identical pairs drop out of the PSNR mean
      sum += row[col];
      ++count;
    }
    report.means[col] = count > 0 ? sum / count : std::numeric_limits<double>::infinity();
  }
  return report;
}

}  // namespace lossim
