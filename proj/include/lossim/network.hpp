#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "lossim/image.hpp"
#include "lossim/losses.hpp"
#include "lossim/metrics.hpp"
#include "lossim/pipeline.hpp"

namespace lossim {

/// Same-size convolution with replicate padding. Weight layout is
/// [out][kr][kc][in], matching the channel-fastest image layout so the inner
/// accumulation runs over contiguous memory.
struct ConvLayer {
  int out_channels = 0;
  int in_channels = 0;
  int kernel_size = 0;  // odd
  std::vector<double> weights;
  std::vector<double> bias;
  std::vector<double> weight_grad;
  std::vector<double> bias_grad;
  std::vector<double> weight_velocity;
  std::vector<double> bias_velocity;

  ConvLayer() = default;
  ConvLayer(int out_ch, int in_ch, int k) : out_channels(out_ch), in_channels(in_ch), kernel_size(k) {
    if (k % 2 == 0) throw std::invalid_argument("ConvLayer: kernel size must be odd");
    const size_t n = static_cast<size_t>(out_ch) * k * k * in_ch;
    weights.assign(n, 0.0);
    bias.assign(out_ch, 0.0);
    weight_grad.assign(n, 0.0);
    bias_grad.assign(out_ch, 0.0);
    weight_velocity.assign(n, 0.0);
    bias_velocity.assign(out_ch, 0.0);
  }

  size_t weight_index(int o, int kr, int kc, int i) const {
    return ((static_cast<size_t>(o) * kernel_size + kr) * kernel_size + kc) * in_channels + i;
  }
};

struct PreluLayer {
  std::vector<double> slope;
  std::vector<double> slope_grad;
  std::vector<double> slope_velocity;

  PreluLayer() = default;
  explicit PreluLayer(int channels, double init = 0.25)
      : slope(channels, init), slope_grad(channels, 0.0), slope_velocity(channels, 0.0) {}
};

using Layer = std::variant<ConvLayer, PreluLayer>;

struct ConvNet {
  std::vector<Layer> layers;

  // forward() cache: activations[i] is the input of layer i,
  // activations.back() the network output.
  std::vector<ImageBuffer> activations;

  int input_channels() const {
    for (const auto& layer : layers)
      if (const auto* conv = std::get_if<ConvLayer>(&layer)) return conv->in_channels;
    return 0;
  }
  int output_channels() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
      if (const auto* conv = std::get_if<ConvLayer>(&*it)) return conv->out_channels;
    return 0;
  }
};

namespace detail {

inline ImageBuffer conv_forward(const ConvLayer& layer, const ImageBuffer& in) {
  if (in.channels() != layer.in_channels) {
    throw std::invalid_argument("conv_forward: channel mismatch");
  }
  const int h = in.height(), w = in.width();
  const int radius = layer.kernel_size / 2;
  const int ic = layer.in_channels;
  ImageBuffer out(h, w, layer.out_channels);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int o = 0; o < layer.out_channels; ++o) {
        double acc = layer.bias[o];
        for (int kr = 0; kr < layer.kernel_size; ++kr) {
          const int rr = std::clamp(r + kr - radius, 0, h - 1);
          for (int kc = 0; kc < layer.kernel_size; ++kc) {
            const int cc = std::clamp(c + kc - radius, 0, w - 1);
            const double* wp = &layer.weights[layer.weight_index(o, kr, kc, 0)];
            const double* ip = &in.data()[(static_cast<size_t>(rr) * w + cc) * ic];
            for (int i = 0; i < ic; ++i) acc += wp[i] * ip[i];
          }
        }
        out.at(r, c, o) = acc;
      }
    }
  }
  return out;
}

// Gradients into the layer, returns the gradient w.r.t. the input. Replicate
// padding scatters contributions back to the clamped coordinates.
inline ImageBuffer conv_backward(ConvLayer& layer, const ImageBuffer& in,
                                 const ImageBuffer& out_grad) {
  const int h = in.height(), w = in.width();
  const int radius = layer.kernel_size / 2;
  const int ic = layer.in_channels;
  ImageBuffer in_grad(h, w, ic);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      for (int o = 0; o < layer.out_channels; ++o) {
        const double g = out_grad.at(r, c, o);
        if (g == 0.0) continue;
        layer.bias_grad[o] += g;
        for (int kr = 0; kr < layer.kernel_size; ++kr) {
          const int rr = std::clamp(r + kr - radius, 0, h - 1);
          for (int kc = 0; kc < layer.kernel_size; ++kc) {
            const int cc = std::clamp(c + kc - radius, 0, w - 1);
            double* wg = &layer.weight_grad[layer.weight_index(o, kr, kc, 0)];
            const double* wp = &layer.weights[layer.weight_index(o, kr, kc, 0)];
            const double* ip = &in.data()[(static_cast<size_t>(rr) * w + cc) * ic];
            double* gp = &in_grad.data()[(static_cast<size_t>(rr) * w + cc) * ic];
            for (int i = 0; i < ic; ++i) {
              wg[i] += g * ip[i];
              gp[i] += g * wp[i];
            }
          }
        }
      }
    }
  }
  return in_grad;
}

inline ImageBuffer prelu_forward(const PreluLayer& layer, const ImageBuffer& in) {
  if (in.channels() != static_cast<int>(layer.slope.size())) {
    throw std::invalid_argument("prelu_forward: channel mismatch");
  }
  ImageBuffer out = in;
  const int ch = in.channels();
  for (size_t i = 0; i < out.size(); ++i) {
    if (out[i] < 0.0) out[i] *= layer.slope[i % ch];
  }
  return out;
}

inline ImageBuffer prelu_backward(PreluLayer& layer, const ImageBuffer& in,
                                  const ImageBuffer& out_grad) {
  ImageBuffer in_grad(in.height(), in.width(), in.channels());
  const int ch = in.channels();
  for (size_t i = 0; i < in.size(); ++i) {
    if (in[i] >= 0.0) {
      in_grad[i] = out_grad[i];
    } else {
      in_grad[i] = layer.slope[i % ch] * out_grad[i];
      layer.slope_grad[i % ch] += out_grad[i] * in[i];
    }
  }
  return in_grad;
}

}  // namespace detail

/// Runs the net and caches per-layer inputs for backward().
inline ImageBuffer forward(ConvNet& net, const ImageBuffer& input) {
  if (input.channels() != net.input_channels()) {
    throw std::invalid_argument("forward: input channel mismatch");
  }
  net.activations.clear();
  net.activations.push_back(input);
  for (auto& layer : net.layers) {
    const ImageBuffer& in = net.activations.back();
    net.activations.push_back(std::visit(
        [&](const auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer>) return detail::conv_forward(l, in);
          else return detail::prelu_forward(l, in);
        },
        layer));
  }
  return net.activations.back();
}

/// Accumulates parameter gradients from the loss gradient at the output;
/// returns the gradient w.r.t. the network input.
inline ImageBuffer backward(ConvNet& net, const ImageBuffer& loss_grad) {
  if (net.activations.size() != net.layers.size() + 1) {
    throw std::logic_error("backward: forward() has not been run for this input");
  }
  ImageBuffer grad = loss_grad;
  for (size_t li = net.layers.size(); li > 0; --li) {
    const ImageBuffer& in = net.activations[li - 1];
    grad = std::visit(
        [&](auto& l) {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, ConvLayer>) return detail::conv_backward(l, in, grad);
          else return detail::prelu_backward(l, in, grad);
        },
        net.layers[li - 1]);
  }
  return grad;
}

/// Momentum SGD over all parameters; gradients are divided by `grad_scale`
/// (the batch size) and cleared afterwards.
inline void sgd_step(ConvNet& net, double rate, double momentum, double grad_scale = 1.0) {
  auto update = [&](std::vector<double>& param, std::vector<double>& grad,
                    std::vector<double>& velocity) {
    for (size_t i = 0; i < param.size(); ++i) {
      velocity[i] = momentum * velocity[i] - rate * grad[i] / grad_scale;
      param[i] += velocity[i];
      grad[i] = 0.0;
    }
  };
  for (auto& layer : net.layers) {
    if (auto* conv = std::get_if<ConvLayer>(&layer)) {
      update(conv->weights, conv->weight_grad, conv->weight_velocity);
      update(conv->bias, conv->bias_grad, conv->bias_velocity);
    } else {
      auto& prelu = std::get<PreluLayer>(layer);
      update(prelu.slope, prelu.slope_grad, prelu.slope_velocity);
    }
  }
}

/// Gaussian fan-in init for conv weights, 0.25 PReLU slopes.
inline void init_weights(ConvNet& net, uint64_t seed) {
  NormalSource normals(seed);
  for (auto& layer : net.layers) {
    if (auto* conv = std::get_if<ConvLayer>(&layer)) {
      const double stddev =
          std::sqrt(2.0 / (static_cast<double>(conv->kernel_size) * conv->kernel_size *
                           conv->in_channels));
      for (double& w : conv->weights) w = stddev * normals.next();
      std::fill(conv->bias.begin(), conv->bias.end(), 0.0);
    }
  }
}

/// conv 64x9x9x3 -> PReLU -> conv 64x5x5x64 -> PReLU -> conv 3x5x5x64.
inline ConvNet make_default_net(uint64_t seed = 1) {
  ConvNet net;
  net.layers.emplace_back(ConvLayer(64, 3, 9));
  net.layers.emplace_back(PreluLayer(64));
  net.layers.emplace_back(ConvLayer(64, 64, 5));
  net.layers.emplace_back(PreluLayer(64));
  net.layers.emplace_back(ConvLayer(3, 64, 5));
  init_weights(net, seed);
  return net;
}

/// Small net for quick experiments and tests.
inline ConvNet make_small_net(int channels, int hidden, int k, uint64_t seed) {
  ConvNet net;
  net.layers.emplace_back(ConvLayer(hidden, channels, k));
  net.layers.emplace_back(PreluLayer(hidden));
  net.layers.emplace_back(ConvLayer(channels, hidden, k));
  init_weights(net, seed);
  return net;
}

/// One full-resolution pass, output clamped to [0,1].
inline ImageBuffer restore_image(ConvNet& net, const ImageBuffer& img) {
  ImageBuffer out = forward(net, img);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0, 1.0);
  return out;
}

// ---- checkpoint I/O -------------------------------------------------------

namespace detail {

constexpr char kCheckpointMagic[8] = {'L', 'S', 'I', 'M', 'N', 'E', 'T', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* field) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error(std::string("checkpoint: truncated at ") + field);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const ConvNet& net, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(detail::kCheckpointMagic, 8);
  detail::write_pod<uint32_t>(out, static_cast<uint32_t>(net.layers.size()));
  for (const auto& layer : net.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      detail::write_pod<uint32_t>(out, 0);
      detail::write_pod<uint32_t>(out, conv->out_channels);
      detail::write_pod<uint32_t>(out, conv->in_channels);
      detail::write_pod<uint32_t>(out, conv->kernel_size);
      out.write(reinterpret_cast<const char*>(conv->weights.data()),
                static_cast<std::streamsize>(conv->weights.size() * sizeof(double)));
      out.write(reinterpret_cast<const char*>(conv->bias.data()),
                static_cast<std::streamsize>(conv->bias.size() * sizeof(double)));
    } else {
      const auto& prelu = std::get<PreluLayer>(layer);
      detail::write_pod<uint32_t>(out, 1);
      detail::write_pod<uint32_t>(out, static_cast<uint32_t>(prelu.slope.size()));
      out.write(reinterpret_cast<const char*>(prelu.slope.data()),
                static_cast<std::streamsize>(prelu.slope.size() * sizeof(double)));
    }
  }
  if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline ConvNet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto nlayers = detail::read_pod<uint32_t>(in, "layer count");
  ConvNet net;
  for (uint32_t li = 0; li < nlayers; ++li) {
    const auto type = detail::read_pod<uint32_t>(in, "layer type");
    if (type == 0) {
      const auto out_ch = detail::read_pod<uint32_t>(in, "out channels");
      const auto in_ch = detail::read_pod<uint32_t>(in, "in channels");
      const auto k = detail::read_pod<uint32_t>(in, "kernel size");
      if (out_ch == 0 || in_ch == 0 || k == 0 || k % 2 == 0 || out_ch > 4096 || in_ch > 4096 ||
          k > 63) {
        throw std::runtime_error("checkpoint: implausible conv dimensions");
      }
      ConvLayer conv(static_cast<int>(out_ch), static_cast<int>(in_ch), static_cast<int>(k));
      in.read(reinterpret_cast<char*>(conv.weights.data()),
              static_cast<std::streamsize>(conv.weights.size() * sizeof(double)));
      in.read(reinterpret_cast<char*>(conv.bias.data()),
              static_cast<std::streamsize>(conv.bias.size() * sizeof(double)));
      if (!in) throw std::runtime_error("checkpoint: truncated at conv parameters");
      net.layers.emplace_back(std::move(conv));
    } else if (type == 1) {
      const auto ch = detail::read_pod<uint32_t>(in, "prelu channels");
      if (ch == 0 || ch > 4096) throw std::runtime_error("checkpoint: implausible prelu size");
      PreluLayer prelu(static_cast<int>(ch));
      in.read(reinterpret_cast<char*>(prelu.slope.data()),
              static_cast<std::streamsize>(prelu.slope.size() * sizeof(double)));
      if (!in) throw std::runtime_error("checkpoint: truncated at prelu slopes");
      net.layers.emplace_back(std::move(prelu));
    } else {
      throw std::runtime_error("checkpoint: unknown layer type " + std::to_string(type));
    }
  }
  return net;
}

// ---- trainer ---------------------------------------------------------------

struct SchedulePhase {
  LossKind loss = LossKind::L2;
  int start_epoch = 0;
};

struct TrainConfig {
  double learning_rate = -1.0;  // negative = per-loss default: 1e-3 for L1/L2, 1e-4 otherwise
  double momentum = 0.9;
  int batch_size = 4;
  int epochs = 10;
  std::vector<SchedulePhase> schedule = {{LossKind::L2, 0}};
  uint64_t seed = 1;
  LossParams loss_params{};

  double rate_for(LossKind kind) const {
    if (learning_rate >= 0.0) return learning_rate;
    return (kind == LossKind::L1 || kind == LossKind::L2) ? 1e-3 : 1e-4;
  }
};

struct EpochRecord {
  int epoch = 0;
  LossKind loss = LossKind::L2;
  double train_loss = 0.0;
  std::optional<double> val_psnr;
  std::optional<double> val_ssim;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;

  void write_csv(std::ostream& out) const {
    out << "epoch,loss,train_loss,val_psnr,val_ssim\n";
    for (const auto& e : epochs) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.12g", e.train_loss);
      out << e.epoch << "," << loss_name(e.loss) << "," << buf;
      auto optional_cell = [&](const std::optional<double>& v) {
        if (v) {
          std::snprintf(buf, sizeof(buf), "%.9g", *v);
          out << "," << buf;
        } else {
          out << ",";
        }
      };
      optional_cell(e.val_psnr);
      optional_cell(e.val_ssim);
      out << "\n";
    }
  }
};

namespace detail {

inline LossKind active_loss(const std::vector<SchedulePhase>& schedule, int epoch) {
  if (schedule.empty()) throw std::invalid_argument("train: empty loss schedule");
  LossKind kind = schedule.front().loss;
  for (const auto& phase : schedule) {
    if (epoch >= phase.start_epoch) kind = phase.loss;
  }
  return kind;
}

// Deterministic Fisher-Yates; std::shuffle's draw sequence is
// implementation-defined, which would break bit-identical histories.
inline void shuffle_indices(std::vector<size_t>& idx, std::mt19937_64& rng) {
  for (size_t i = idx.size(); i > 1; --i) {
    const size_t j = rng() % i;
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace detail

/// Epochs of shuffled mini-batches; the active loss follows the schedule.
/// Aborts on non-finite loss, naming the batch. Validation pairs, when given,
/// are scored with PSNR and SSIM each epoch.
inline TrainingHistory train(ConvNet& net, const std::vector<TrainingPair>& data,
                             const TrainConfig& cfg,
                             const std::vector<TrainingPair>& validation = {}) {
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  if (cfg.batch_size < 1 || cfg.epochs < 0) throw std::invalid_argument("train: bad config");

  std::mt19937_64 shuffle_rng(cfg.seed);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});

  TrainingHistory history;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const LossKind kind = detail::active_loss(cfg.schedule, epoch);
    const double rate = cfg.rate_for(kind);
    detail::shuffle_indices(order, shuffle_rng);

    double epoch_loss = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      for (size_t s = start; s < end; ++s) {
        const TrainingPair& pair = data[order[s]];
        const ImageBuffer output = forward(net, pair.input);
        const LossEvaluation eval = evaluate_loss(kind, output, pair.target, cfg.loss_params);
        if (!std::isfinite(eval.value)) {
          throw std::runtime_error("train: non-finite " + loss_name(kind) + " loss in epoch " +
                                   std::to_string(epoch) + ", batch " +
                                   std::to_string(start / cfg.batch_size));
        }
        epoch_loss += eval.value;
        backward(net, eval.gradient);
      }
      sgd_step(net, rate, cfg.momentum, static_cast<double>(end - start));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = kind;
    rec.train_loss = epoch_loss / static_cast<double>(data.size());
    if (!validation.empty()) {
      double psnr_sum = 0.0, ssim_sum = 0.0;
      for (const auto& pair : validation) {
        const ImageBuffer restored = restore_image(net, pair.input);
        const double p = psnr(restored, pair.target);
        psnr_sum += std::isinf(p) ? 100.0 : p;
        ssim_sum += ssim_index(restored, pair.target, cfg.loss_params.ssim_sigma,
                               cfg.loss_params.constants);
      }
      rec.val_psnr = psnr_sum / validation.size();
      rec.val_ssim = ssim_sum / validation.size();
    }
    history.epochs.push_back(rec);
  }
  return history;
}

}  // namespace lossim
