#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lossim/gaussian.hpp"
#include "lossim/image.hpp"

namespace lossim {

/// Stabilization constants of the SSIM luminance and contrast-structure terms.
struct SsimConstants {
  double c1 = 1e-4;   // (0.01 * L)^2
  double c2 = 9e-4;   // (0.03 * L)^2
  double range = 1.0;

  static SsimConstants for_range(double L) {
    return {(0.01 * L) * (0.01 * L), (0.03 * L) * (0.03 * L), L};
  }
};

/// Gaussian window widths replacing the dyadic pyramid, coarse scale last.
struct SigmaBank {
  std::vector<double> sigmas;

  static SigmaBank default_bank() { return {{0.5, 1.0, 2.0, 4.0, 8.0}}; }
  double largest() const { return sigmas.back(); }
};

/// Scalar loss plus the gradient of the loss with respect to every sample of
/// the predicted image.
struct LossEvaluation {
  double value = 0.0;
  ImageBuffer gradient;
};

enum class LossKind { L1, L2, Ssim, MsSsim, Mix };

inline std::string loss_name(LossKind kind) {
  switch (kind) {
    case LossKind::L1: return "l1";
    case LossKind::L2: return "l2";
    case LossKind::Ssim: return "ssim";
    case LossKind::MsSsim: return "msssim";
    case LossKind::Mix: return "mix";
  }
  return "?";
}

inline LossKind loss_from_name(const std::string& name) {
  if (name == "l1") return LossKind::L1;
  if (name == "l2") return LossKind::L2;
  if (name == "ssim") return LossKind::Ssim;
  if (name == "msssim") return LossKind::MsSsim;
  if (name == "mix") return LossKind::Mix;
  throw std::invalid_argument("unknown loss: " + name);
}

inline LossEvaluation l2_loss(const ImageBuffer& x, const ImageBuffer& y) {
  require_same_shape(x, y, "l2_loss");
  LossEvaluation out;
  out.gradient = ImageBuffer(x.height(), x.width(), x.channels());
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    out.value += d * d / n;
    out.gradient[i] = 2.0 * d / n;
  }
  return out;
}

inline LossEvaluation l1_loss(const ImageBuffer& x, const ImageBuffer& y) {
  require_same_shape(x, y, "l1_loss");
  LossEvaluation out;
  out.gradient = ImageBuffer(x.height(), x.width(), x.channels());
  const double n = static_cast<double>(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    out.value += std::abs(d) / n;
    out.gradient[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) / n;
  }
  return out;
}

/// SSIM at one pixel for one channel, split into its two factors.
struct SsimTerms {
  double ssim = 0.0;
  double luminance = 0.0;          // l
  double contrast_structure = 0.0;  // cs
};

inline SsimTerms ssim_terms(const LocalMoments& m, const SsimConstants& c) {
  SsimTerms t;
  t.luminance = (2.0 * m.mu_x * m.mu_y + c.c1) / (m.mu_x * m.mu_x + m.mu_y * m.mu_y + c.c1);
  t.contrast_structure = (2.0 * m.cov_xy + c.c2) / (m.var_x + m.var_y + c.c2);
  t.ssim = t.luminance * t.contrast_structure;
  return t;
}

/// Per-channel SSIM terms at a pixel, Gaussian window of the given sigma.
inline std::vector<SsimTerms> ssim_point(const ImageBuffer& x, const ImageBuffer& y, int row,
                                         int col, double sigma,
                                         const SsimConstants& c = SsimConstants{}) {
  require_same_shape(x, y, "ssim_point");
  if (row < 0 || row >= x.height() || col < 0 || col >= x.width()) {
    throw std::invalid_argument("ssim_point: pixel outside image");
  }
  const GaussianKernel k = gaussian_kernel(sigma);
  std::vector<SsimTerms> terms(x.channels());
  for (int ch = 0; ch < x.channels(); ++ch) {
    terms[ch] = ssim_terms(local_moments(x, y, k, row, col, ch), c);
  }
  return terms;
}

namespace detail {

inline void require_odd_patch(const ImageBuffer& x, const char* where) {
  if (x.height() % 2 == 0 || x.width() % 2 == 0) {
    throw std::invalid_argument(std::string(where) + ": patch sides must be odd");
  }
}

// Gradient of l(p~)*cs(p~) accumulated into grad with the given scale; the
// window weights are the renormalized ones the moments were computed with.
struct SsimChannelState {
  LocalMoments moments;
  SsimTerms terms;
};

inline SsimChannelState ssim_channel_state(const ImageBuffer& x, const ImageBuffer& y,
                                           const GaussianKernel& k, int row, int col, int ch,
                                           const SsimConstants& c) {
  SsimChannelState s;
  s.moments = local_moments(x, y, k, row, col, ch);
  s.terms = ssim_terms(s.moments, c);
  return s;
}

}  // namespace detail

enum class SsimLossMode { CenterPixel, PatchMean };

/// 1 - SSIM at the patch center, with analytic gradients flowing to every
/// pixel inside the Gaussian window. PatchMean mode averages 1 - SSIM(p) over
/// all pixels instead (for comparison runs).
inline LossEvaluation ssim_loss(const ImageBuffer& x, const ImageBuffer& y, double sigma,
                                const SsimConstants& c = SsimConstants{},
                                SsimLossMode mode = SsimLossMode::CenterPixel) {
  require_same_shape(x, y, "ssim_loss");
  detail::require_odd_patch(x, "ssim_loss");
  const int h = x.height(), w = x.width(), channels = x.channels();
  const GaussianKernel k = gaussian_kernel(sigma);

  LossEvaluation out;
  out.gradient = ImageBuffer(h, w, channels);

  auto accumulate_point = [&](int row, int col, double point_scale) {
    const int r0 = std::max(0, row - k.radius), r1 = std::min(h - 1, row + k.radius);
    const int c0 = std::max(0, col - k.radius), c1 = std::min(w - 1, col + k.radius);
    double row_sum = 0.0, col_sum = 0.0;
    for (int r = r0; r <= r1; ++r) row_sum += k.coeff(r - row);
    for (int cc = c0; cc <= c1; ++cc) col_sum += k.coeff(cc - col);
    const double norm = row_sum * col_sum;

    for (int ch = 0; ch < channels; ++ch) {
      const auto s = detail::ssim_channel_state(x, y, k, row, col, ch, c);
      out.value += point_scale * (1.0 - s.terms.ssim) / channels;

      const double l = s.terms.luminance, cs = s.terms.contrast_structure;
      const double dl_common =
          2.0 * (s.moments.mu_y - s.moments.mu_x * l) /
          (s.moments.mu_x * s.moments.mu_x + s.moments.mu_y * s.moments.mu_y + c.c1);
      const double dcs_common = 2.0 / (s.moments.var_x + s.moments.var_y + c.c2);

      for (int r = r0; r <= r1; ++r) {
        for (int cc = c0; cc <= c1; ++cc) {
          const double wq = k.coeff(r - row) * k.coeff(cc - col) / norm;
          const double dl = wq * dl_common;
          const double dcs = dcs_common * wq *
                             ((y.at(r, cc, ch) - s.moments.mu_y) -
                              cs * (x.at(r, cc, ch) - s.moments.mu_x));
          out.gradient.at(r, cc, ch) -= point_scale * (dl * cs + l * dcs) / channels;
        }
      }
    }
  };

  if (mode == SsimLossMode::CenterPixel) {
    accumulate_point(h / 2, w / 2, 1.0);
  } else {
    const double per_pixel = 1.0 / (static_cast<double>(h) * w);
    for (int r = 0; r < h; ++r)
      for (int cc = 0; cc < w; ++cc) accumulate_point(r, cc, per_pixel);
  }
  return out;
}

/// 1 - l_M * prod_j cs_j at the patch center, each cs_j from one sigma of the
/// bank on the full-resolution patch and l_M from the largest sigma. The
/// gradient uses products excluding the differentiated factor, never division
/// by a cs term.
inline LossEvaluation msssim_loss(const ImageBuffer& x, const ImageBuffer& y,
                                  const SigmaBank& bank = SigmaBank::default_bank(),
                                  const SsimConstants& c = SsimConstants{}) {
  require_same_shape(x, y, "msssim_loss");
  detail::require_odd_patch(x, "msssim_loss");
  if (bank.sigmas.empty()) throw std::invalid_argument("msssim_loss: empty sigma bank");

  const int h = x.height(), w = x.width(), channels = x.channels();
  const int row = h / 2, col = w / 2;
  const size_t m = bank.sigmas.size();

  std::vector<GaussianKernel> kernels;
  kernels.reserve(m);
  for (double s : bank.sigmas) kernels.push_back(gaussian_kernel(s));
  const GaussianKernel& coarse = kernels.back();

  LossEvaluation out;
  out.gradient = ImageBuffer(h, w, channels);

  for (int ch = 0; ch < channels; ++ch) {
    std::vector<detail::SsimChannelState> states(m);
    for (size_t i = 0; i < m; ++i)
      states[i] = detail::ssim_channel_state(x, y, kernels[i], row, col, ch, c);
    const auto& coarse_state = states.back();
    const double l = coarse_state.terms.luminance;

    // prefix[i] = prod_{j<i} cs_j, suffix[i] = prod_{j>i} cs_j
    std::vector<double> prefix(m + 1, 1.0), suffix(m + 1, 1.0);
    for (size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] * states[i].terms.contrast_structure;
    for (size_t i = m; i > 0; --i) suffix[i - 1] = suffix[i] * states[i - 1].terms.contrast_structure;
    const double cs_product = prefix[m];

    out.value += (1.0 - l * cs_product) / channels;

    // dl_M term over the coarse window
    {
      const auto& s = coarse_state;
      const double dl_common =
          2.0 * (s.moments.mu_y - s.moments.mu_x * l) /
          (s.moments.mu_x * s.moments.mu_x + s.moments.mu_y * s.moments.mu_y + c.c1);
      const int r0 = std::max(0, row - coarse.radius), r1 = std::min(h - 1, row + coarse.radius);
      const int c0 = std::max(0, col - coarse.radius), c1 = std::min(w - 1, col + coarse.radius);
      for (int r = r0; r <= r1; ++r)
        for (int cc = c0; cc <= c1; ++cc) {
          const double wq = window_weight(coarse, h, w, row, col, r, cc);
          out.gradient.at(r, cc, ch) -= wq * dl_common * cs_product / channels;
        }
    }

    // l_M * sum_i dcs_i * prod_{j != i} cs_j
    for (size_t i = 0; i < m; ++i) {
      const auto& s = states[i];
      const GaussianKernel& k = kernels[i];
      const double excl = prefix[i] * suffix[i + 1];
      const double dcs_common = 2.0 / (s.moments.var_x + s.moments.var_y + c.c2);
      const int r0 = std::max(0, row - k.radius), r1 = std::min(h - 1, row + k.radius);
      const int c0 = std::max(0, col - k.radius), c1 = std::min(w - 1, col + k.radius);
      for (int r = r0; r <= r1; ++r)
        for (int cc = c0; cc <= c1; ++cc) {
          const double wq = window_weight(k, h, w, row, col, r, cc);
          const double dcs = dcs_common * wq *
                             ((y.at(r, cc, ch) - s.moments.mu_y) -
                              s.terms.contrast_structure * (x.at(r, cc, ch) - s.moments.mu_x));
          out.gradient.at(r, cc, ch) -= l * dcs * excl / channels;
        }
    }
  }
  return out;
}

/// alpha * MS-SSIM loss + (1-alpha) * Gaussian-weighted L1, the L1 term
/// weighted by the coarse-scale window centered at the patch center.
inline LossEvaluation mix_loss(const ImageBuffer& x, const ImageBuffer& y, double alpha = 0.84,
                               const SigmaBank& bank = SigmaBank::default_bank(),
                               const SsimConstants& c = SsimConstants{}) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mix_loss: alpha out of [0,1]");
  LossEvaluation out = msssim_loss(x, y, bank, c);
  out.value *= alpha;
  for (size_t i = 0; i < out.gradient.size(); ++i) out.gradient[i] *= alpha;

  const int h = x.height(), w = x.width(), channels = x.channels();
  const int row = h / 2, col = w / 2;
  const GaussianKernel k = gaussian_kernel(bank.largest());
  const double beta = (1.0 - alpha) / channels;
  const int r0 = std::max(0, row - k.radius), r1 = std::min(h - 1, row + k.radius);
  const int c0 = std::max(0, col - k.radius), c1 = std::min(w - 1, col + k.radius);
  for (int r = r0; r <= r1; ++r)
    for (int cc = c0; cc <= c1; ++cc) {
      const double wq = window_weight(k, h, w, row, col, r, cc);
      for (int ch = 0; ch < channels; ++ch) {
        const double d = x.at(r, cc, ch) - y.at(r, cc, ch);
        out.value += beta * wq * std::abs(d);
        out.gradient.at(r, cc, ch) += beta * wq * (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0));
      }
    }
  return out;
}

/// Value-only evaluations: center-pixel moments without gradient assembly,
/// for finite-difference probes and quick scoring.
inline double ssim_loss_value(const ImageBuffer& x, const ImageBuffer& y, double sigma,
                              const SsimConstants& c = SsimConstants{}) {
  require_same_shape(x, y, "ssim_loss_value");
  detail::require_odd_patch(x, "ssim_loss_value");
  const GaussianKernel k = gaussian_kernel(sigma);
  const int row = x.height() / 2, col = x.width() / 2;
  double value = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) {
    value += (1.0 - ssim_terms(local_moments(x, y, k, row, col, ch), c).ssim) / x.channels();
  }
  return value;
}

inline double msssim_loss_value(const ImageBuffer& x, const ImageBuffer& y,
                                const SigmaBank& bank = SigmaBank::default_bank(),
                                const SsimConstants& c = SsimConstants{}) {
  require_same_shape(x, y, "msssim_loss_value");
  detail::require_odd_patch(x, "msssim_loss_value");
  if (bank.sigmas.empty()) throw std::invalid_argument("msssim_loss_value: empty sigma bank");
  const int row = x.height() / 2, col = x.width() / 2;
  double value = 0.0;
  for (int ch = 0; ch < x.channels(); ++ch) {
    double cs_product = 1.0, coarse_l = 0.0;
    for (double sigma : bank.sigmas) {
      const GaussianKernel k = gaussian_kernel(sigma);
      const SsimTerms t = ssim_terms(local_moments(x, y, k, row, col, ch), c);
      cs_product *= t.contrast_structure;
      coarse_l = t.luminance;
    }
    value += (1.0 - coarse_l * cs_product) / x.channels();
  }
  return value;
}

inline double mix_loss_value(const ImageBuffer& x, const ImageBuffer& y, double alpha = 0.84,
                             const SigmaBank& bank = SigmaBank::default_bank(),
                             const SsimConstants& c = SsimConstants{}) {
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("mix_loss_value: alpha out of [0,1]");
  double value = alpha * msssim_loss_value(x, y, bank, c);
  const int h = x.height(), w = x.width(), channels = x.channels();
  const int row = h / 2, col = w / 2;
  const GaussianKernel k = gaussian_kernel(bank.largest());
  const double beta = (1.0 - alpha) / channels;
  for (int r = std::max(0, row - k.radius); r <= std::min(h - 1, row + k.radius); ++r)
    for (int cc = std::max(0, col - k.radius); cc <= std::min(w - 1, col + k.radius); ++cc) {
      const double wq = window_weight(k, h, w, row, col, r, cc);
      for (int ch = 0; ch < channels; ++ch)
        value += beta * wq * std::abs(x.at(r, cc, ch) - y.at(r, cc, ch));
    }
  return value;
}

/// Parameters shared by the dispatching entry point below.
struct LossParams {
  double ssim_sigma = 5.0;
  SigmaBank bank = SigmaBank::default_bank();
  SsimConstants constants{};
  double mix_alpha = 0.84;
};

inline LossEvaluation evaluate_loss(LossKind kind, const ImageBuffer& x, const ImageBuffer& y,
                                    const LossParams& p = LossParams{}) {
  switch (kind) {
    case LossKind::L1: return l1_loss(x, y);
    case LossKind::L2: return l2_loss(x, y);
    case LossKind::Ssim: return ssim_loss(x, y, p.ssim_sigma, p.constants);
    case LossKind::MsSsim: return msssim_loss(x, y, p.bank, p.constants);
    case LossKind::Mix: return mix_loss(x, y, p.mix_alpha, p.bank, p.constants);
  }
  throw std::logic_error("evaluate_loss: unreachable");
}

inline double loss_value(LossKind kind, const ImageBuffer& x, const ImageBuffer& y,
                         const LossParams& p = LossParams{}) {
  switch (kind) {
    case LossKind::L1: return l1_loss(x, y).value;
    case LossKind::L2: return l2_loss(x, y).value;
    case LossKind::Ssim: return ssim_loss_value(x, y, p.ssim_sigma, p.constants);
    case LossKind::MsSsim: return msssim_loss_value(x, y, p.bank, p.constants);
    case LossKind::Mix: return mix_loss_value(x, y, p.mix_alpha, p.bank, p.constants);
  }
  throw std::logic_error("loss_value: unreachable");
}

/// Central-difference gradient of an arbitrary scalar loss, one sample at a time.
inline ImageBuffer finite_diff_gradient(
    const std::function<double(const ImageBuffer&, const ImageBuffer&)>& loss,
    const ImageBuffer& x, const ImageBuffer& y, double eps = 1e-4) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_diff_gradient: eps must be positive");
  ImageBuffer grad(x.height(), x.width(), x.channels());
  ImageBuffer probe = x;
  for (size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + eps;
    const double plus = loss(probe, y);
    probe[i] = saved - eps;
    const double minus = loss(probe, y);
    probe[i] = saved;
    grad[i] = (plus - minus) / (2.0 * eps);
  }
  return grad;
}

}  // namespace lossim
