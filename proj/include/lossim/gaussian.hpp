#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "lossim/image.hpp"

namespace lossim {

/// 1-D normalized Gaussian, truncated at radius = ceil(3*sigma).
struct GaussianKernel {
  double sigma = 0.0;
  int radius = 0;
  std::vector<double> coefficients;  // size 2*radius+1, unit sum

  double coeff(int offset) const { return coefficients[offset + radius]; }
};

inline GaussianKernel gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  GaussianKernel k;
  k.sigma = sigma;
  k.radius = static_cast<int>(std::ceil(3.0 * sigma));
  k.coefficients.resize(2 * k.radius + 1);
  double sum = 0.0;
  for (int i = -k.radius; i <= k.radius; ++i) {
    const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k.coefficients[i + k.radius] = v;
    sum += v;
  }
  for (double& c : k.coefficients) c /= sum;
  return k;
}

enum class BorderMode {
  Replicate,    // clamp sample coordinates to the image
  Renormalize,  // truncate the kernel at the border and rescale to unit sum
};

/// Horizontal then vertical 1-D convolution per channel.
inline ImageBuffer filter_separable(const ImageBuffer& img, const GaussianKernel& k,
                                    BorderMode border) {
  const int h = img.height(), w = img.width(), ch = img.channels();
  const int radius = k.radius;

  auto pass = [&](const ImageBuffer& src, bool horizontal) {
    ImageBuffer dst(h, w, ch);
    const int limit = horizontal ? w : h;
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const int center = horizontal ? c : r;
        double weight_sum = 0.0;
        std::vector<double> acc(ch, 0.0);
        for (int i = -radius; i <= radius; ++i) {
          int pos = center + i;
          if (border == BorderMode::Replicate) {
            pos = std::clamp(pos, 0, limit - 1);
          } else if (pos < 0 || pos >= limit) {
            continue;
          }
          const double wgt = k.coeff(i);
          weight_sum += wgt;
          for (int q = 0; q < ch; ++q)
            acc[q] += wgt * (horizontal ? src.at(r, pos, q) : src.at(pos, c, q));
        }
        for (int q = 0; q < ch; ++q)
          dst.at(r, c, q) = border == BorderMode::Renormalize ? acc[q] / weight_sum : acc[q];
      }
    }
    return dst;
  };

  return pass(pass(img, true), false);
}

/// Gaussian-weighted means, variances, and covariance at one pixel and channel.
struct LocalMoments {
  double mu_x = 0.0;
  double mu_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;
  double cov_xy = 0.0;
};

/// 2-D window around `at` from the separable kernel; weights renormalized to
/// unit sum where the window is truncated by the image border. Negative
/// variances from cancellation are clamped to 0.
inline LocalMoments local_moments(const ImageBuffer& x, const ImageBuffer& y,
                                  const GaussianKernel& k, int row, int col, int channel) {
  require_same_shape(x, y, "local_moments");
  const int h = x.height(), w = x.width();
  const int r0 = std::max(0, row - k.radius), r1 = std::min(h - 1, row + k.radius);
  const int c0 = std::max(0, col - k.radius), c1 = std::min(w - 1, col + k.radius);

  double wsum = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (int r = r0; r <= r1; ++r) {
    const double wr = k.coeff(r - row);
    for (int c = c0; c <= c1; ++c) {
      const double wgt = wr * k.coeff(c - col);
      const double vx = x.at(r, c, channel);
      const double vy = y.at(r, c, channel);
      wsum += wgt;
      sx += wgt * vx;
      sy += wgt * vy;
      sxx += wgt * vx * vx;
      syy += wgt * vy * vy;
      sxy += wgt * vx * vy;
    }
  }

  LocalMoments m;
  m.mu_x = sx / wsum;
  m.mu_y = sy / wsum;
  m.var_x = std::max(0.0, sxx / wsum - m.mu_x * m.mu_x);
  m.var_y = std::max(0.0, syy / wsum - m.mu_y * m.mu_y);
  m.cov_xy = sxy / wsum - m.mu_x * m.mu_y;
  return m;
}

/// The renormalized 2-D window weight of pixel (row+dr, col+dc) for a kernel
/// centered at (row, col); zero outside image or kernel support. Matches the
/// weights used by local_moments, which the analytic SSIM gradients need.
inline double window_weight(const GaussianKernel& k, int height, int width, int row, int col,
                            int at_row, int at_col) {
  const int dr = at_row - row, dc = at_col - col;
  if (std::abs(dr) > k.radius || std::abs(dc) > k.radius) return 0.0;
  if (at_row < 0 || at_row >= height || at_col < 0 || at_col >= width) return 0.0;
  const int r0 = std::max(0, row - k.radius), r1 = std::min(height - 1, row + k.radius);
  const int c0 = std::max(0, col - k.radius), c1 = std::min(width - 1, col + k.radius);
  double row_sum = 0.0, col_sum = 0.0;
  for (int r = r0; r <= r1; ++r) row_sum += k.coeff(r - row);
  for (int c = c0; c <= c1; ++c) col_sum += k.coeff(c - col);
  return k.coeff(dr) * k.coeff(dc) / (row_sum * col_sum);
}

}  // namespace lossim
