// Command-line front end: corruption pipelines, training, restoration,
// metric reports, gradient verification, and the SSIM analysis demos.
//
// Exit codes: 0 success, 1 verification failure, 2 input error,
// 3 artifact/format error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <sstream>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lossim/image.hpp"
#include "lossim/image_io.hpp"
#include "lossim/losses.hpp"
#include "lossim/metrics.hpp"
#include "lossim/network.hpp"
#include "lossim/pipeline.hpp"

namespace fs = std::filesystem;
using namespace lossim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerification = 1;
constexpr int kExitInput = 2;
constexpr int kExitArtifact = 3;

ImageBuffer random_patch(int h, int w, int ch, std::mt19937_64& rng, double lo, double hi) {
  ImageBuffer img(h, w, ch);
  for (size_t i = 0; i < img.size(); ++i)
    img[i] = lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
  return img;
}

std::string output_path(const fs::path& out_dir, const fs::path& input, const std::string& suffix,
                        const std::string& ext) {
  return (out_dir / (input.stem().string() + suffix + ext)).string();
}

void attach_config(CLI::App* cmd) {
  cmd->set_config("--config", "", "flat key = value config file, flags win on conflict");
  cmd->allow_config_extras(false);
}

// ---- corrupt ---------------------------------------------------------------

struct CorruptArgs {
  std::string task = "denoise_demosaick";
  double a = 0.005;
  double b = 0.0001;
  std::string pattern = "rggb";
  std::string noise_model = "gaussian";
  int scale = 2;
  uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::string out_dir = ".";
};

int run_corrupt(const CorruptArgs& args) {
  CorruptionSpec spec;
  if (args.task == "denoise_demosaick") {
    spec.kind = CorruptionKind::NoiseBayer;
  } else if (args.task == "superres") {
    spec.kind = CorruptionKind::SuperRes;
  } else {
    std::cerr << "corrupt: unknown task '" << args.task << "'\n";
    return kExitInput;
  }
  spec.a = args.a;
  spec.b = args.b;
  spec.pattern = bayer_from_name(args.pattern);
  spec.scale = args.scale;
  spec.seed = args.seed;
  spec.noise_model =
      args.noise_model == "poisson" ? NoiseModel::Poisson : NoiseModel::HeteroscedasticGaussian;

  fs::create_directories(args.out_dir);
  std::vector<std::pair<std::string, std::string>> manifest_entries;
  for (size_t i = 0; i < args.inputs.size(); ++i) {
    const ImageBuffer clean = load_image(args.inputs[i]);
    const ImageBuffer corrupted = corrupt_image(clean, spec, i);
    const std::string out = output_path(args.out_dir, args.inputs[i], "_corrupted", ".pfm");
    save_image(corrupted, out, ImageFormat::PFM);
    const double db = psnr(corrupted, clean);
    std::cout << args.inputs[i] << " -> " << out << "  PSNR ";
    if (std::isinf(db)) {
      std::cout << "inf\n";
    } else {
      std::cout << db << " dB\n";
    }
    manifest_entries.emplace_back(out, args.inputs[i]);
  }
  // manifest written last: a failure above leaves no partial manifest behind
  write_manifest((fs::path(args.out_dir) / "manifest.txt").string(), manifest_entries);
  return kExitOk;
}

// ---- train -----------------------------------------------------------------

struct TrainArgs {
  std::string manifest;
  std::string val_manifest;
  std::string loss = "mix";
  std::vector<std::string> switch_loss;  // kind@epoch
  int epochs = 50;
  double lr = -1.0;
  double momentum = 0.9;
  int batch = 4;
  int patch = 31;
  int stride = 16;
  uint64_t seed = 1;
  double ssim_sigma = 5.0;
  double mix_alpha = 0.84;
  std::string net = "default";
  std::string checkpoint = "model.ckpt";
  std::string history = "history.csv";
};

std::vector<TrainingPair> pairs_from_manifest(const std::string& path, int patch, int stride) {
  std::vector<ImageBuffer> inputs, targets;
  for (const auto& [in_path, tg_path] : read_manifest(path)) {
    inputs.push_back(load_image(in_path));
    targets.push_back(load_image(tg_path));
  }
  return make_dataset_external(inputs, targets, patch, stride);
}

int run_train(const TrainArgs& args) {
  TrainConfig cfg;
  cfg.learning_rate = args.lr;
  cfg.momentum = args.momentum;
  cfg.batch_size = args.batch;
  cfg.epochs = args.epochs;
  cfg.seed = args.seed;
  cfg.loss_params.ssim_sigma = args.ssim_sigma;
  cfg.loss_params.mix_alpha = args.mix_alpha;
  cfg.schedule = {{loss_from_name(args.loss), 0}};
  for (const std::string& sw : args.switch_loss) {
    const auto at = sw.find('@');
    if (at == std::string::npos) {
      std::cerr << "train: --switch-loss expects kind@epoch, got '" << sw << "'\n";
      return kExitInput;
    }
    cfg.schedule.push_back({loss_from_name(sw.substr(0, at)), std::stoi(sw.substr(at + 1))});
  }

  const auto data = pairs_from_manifest(args.manifest, args.patch, args.stride);
  std::vector<TrainingPair> validation;
  if (!args.val_manifest.empty()) {
    for (const auto& [in_path, tg_path] : read_manifest(args.val_manifest)) {
      validation.push_back({load_image(in_path), load_image(tg_path)});
    }
  }

  ConvNet net;
  if (args.net == "default") {
    net = make_default_net(args.seed);
  } else if (args.net == "small") {
    net = make_small_net(data.front().input.channels(), 8, 5, args.seed);
  } else {
    std::cerr << "train: unknown net '" << args.net << "'\n";
    return kExitInput;
  }

  const TrainingHistory history = train(net, data, cfg, validation);

  save_checkpoint(net, args.checkpoint);
  std::ofstream csv(args.history);
  if (!csv) throw std::runtime_error("cannot write history: " + args.history);
  history.write_csv(csv);
  if (!history.epochs.empty()) {
    std::cout << "final " << loss_name(history.epochs.back().loss)
              << " loss = " << history.epochs.back().train_loss << " after "
              << history.epochs.size() << " epochs\n";
  }
  std::cout << "checkpoint: " << args.checkpoint << "\nhistory: " << args.history << "\n";
  return kExitOk;
}

// ---- restore -----------------------------------------------------------------

struct RestoreArgs {
  std::string checkpoint;
  std::vector<std::string> inputs;
  std::string out_dir;
  std::string suffix = "_restored";
};

int run_restore(const RestoreArgs& args) {
  ConvNet net;
  try {
    net = load_checkpoint(args.checkpoint);
  } catch (const std::exception& e) {
    std::cerr << "restore: " << e.what() << "\n";
    return kExitArtifact;
  }
  for (const std::string& input : args.inputs) {
    const ImageBuffer img = load_image(input);
    if (img.channels() != net.input_channels()) {
      std::cerr << "restore: checkpoint expects " << net.input_channels()
                << " channels, image has " << img.channels() << " (" << input << ")\n";
      return kExitArtifact;
    }
    const ImageBuffer restored = restore_image(net, img);
    const fs::path in_path(input);
    const fs::path dir = args.out_dir.empty() ? in_path.parent_path() : fs::path(args.out_dir);
    if (!dir.empty()) fs::create_directories(dir);
    const std::string out = output_path(dir, in_path, args.suffix, in_path.extension().string());
    save_image(restored, out);
    std::cout << input << " -> " << out << "\n";
  }
  return kExitOk;
}

// ---- eval --------------------------------------------------------------------

struct EvalArgs {
  std::string manifest;
  std::string out;
  double ssim_sigma = 1.5;
  int msssim_levels = 3;
};

int run_eval(const EvalArgs& args) {
  std::vector<std::pair<ImageBuffer, ImageBuffer>> pairs;
  std::vector<std::string> names;
  for (const auto& [restored, reference] : read_manifest(args.manifest)) {
    pairs.emplace_back(load_image(restored), load_image(reference));
    names.push_back(fs::path(restored).filename().string());
  }
  CorpusOptions opt;
  opt.ssim_sigma = args.ssim_sigma;
  opt.msssim_levels = args.msssim_levels;
  const MetricReport report = evaluate_corpus(pairs, names, opt);
  if (args.out.empty()) {
    report.write_csv(std::cout);
  } else {
    std::ofstream out(args.out);
    if (!out) throw std::runtime_error("cannot write report: " + args.out);
    report.write_csv(out);
    std::cout << "report: " << args.out << "\n";
  }
  return kExitOk;
}

// ---- gradcheck ----------------------------------------------------------------

struct GradcheckArgs {
  int patches = 10;
  uint64_t seed = 2024;
  double eps = 1e-4;
  double perturb_analytic = 0.0;  // debug: injects error to prove the check trips
};

int run_gradcheck(const GradcheckArgs& args) {
  std::mt19937_64 rng(args.seed);
  const LossParams params;
  bool all_ok = true;

  struct Check {
    std::string name;
    std::function<LossEvaluation(const ImageBuffer&, const ImageBuffer&)> eval;
    std::function<double(const ImageBuffer&, const ImageBuffer&)> value;
    bool away_from_kinks = false;
    double threshold = 1e-4;
  };
  std::vector<Check> checks;
  checks.push_back({"l2", [](const ImageBuffer& x, const ImageBuffer& y) { return l2_loss(x, y); },
                    [](const ImageBuffer& x, const ImageBuffer& y) { return l2_loss(x, y).value; },
                    false, 1e-4});
  checks.push_back({"l1", [](const ImageBuffer& x, const ImageBuffer& y) { return l1_loss(x, y); },
                    [](const ImageBuffer& x, const ImageBuffer& y) { return l1_loss(x, y).value; },
                    true, 1e-4});
  for (double sigma : {1.5, 5.0, 9.0}) {
    checks.push_back({"ssim(sigma=" + std::to_string(sigma).substr(0, 3) + ")",
                      [sigma](const ImageBuffer& x, const ImageBuffer& y) {
                        return ssim_loss(x, y, sigma);
                      },
                      [sigma](const ImageBuffer& x, const ImageBuffer& y) {
                        return ssim_loss_value(x, y, sigma);
                      },
                      false, 1e-4});
  }
  checks.push_back({"msssim",
                    [](const ImageBuffer& x, const ImageBuffer& y) { return msssim_loss(x, y); },
                    [](const ImageBuffer& x, const ImageBuffer& y) {
                      return msssim_loss_value(x, y);
                    },
                    false, 1e-4});
  // mix carries the weighted-L1 term, so it needs the same kink avoidance
  checks.push_back({"mix(alpha=0.84)",
                    [](const ImageBuffer& x, const ImageBuffer& y) { return mix_loss(x, y); },
                    [](const ImageBuffer& x, const ImageBuffer& y) {
                      return mix_loss_value(x, y);
                    },
                    true, 1e-4});

  for (const Check& check : checks) {
    double worst = 0.0;
    int worst_patch = -1;
    size_t worst_pixel = 0;
    for (int p = 0; p < args.patches; ++p) {
      // kink avoidance: disjoint ranges keep |x - y| > 10 * eps everywhere
      const ImageBuffer x = check.away_from_kinks ? random_patch(31, 31, 3, rng, 0.55, 0.95)
                                                  : random_patch(31, 31, 3, rng, 0.0, 1.0);
      const ImageBuffer y = check.away_from_kinks ? random_patch(31, 31, 3, rng, 0.05, 0.45)
                                                  : random_patch(31, 31, 3, rng, 0.0, 1.0);
      LossEvaluation analytic = check.eval(x, y);
      if (args.perturb_analytic != 0.0) analytic.gradient[0] += args.perturb_analytic;
      const ImageBuffer fd = finite_diff_gradient(check.value, x, y, args.eps);
      for (size_t i = 0; i < fd.size(); ++i) {
        const double denom = std::max({std::abs(fd[i]), std::abs(analytic.gradient[i]), 1e-6});
        const double rel = std::abs(fd[i] - analytic.gradient[i]) / denom;
        if (rel > worst) {
          worst = rel;
          worst_patch = p;
          worst_pixel = i;
        }
      }
    }
    const bool ok = worst < check.threshold;
    all_ok &= ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  " << check.name << "  max rel err " << worst;
    if (!ok) std::cout << "  (patch " << worst_patch << ", sample " << worst_pixel << ")";
    std::cout << "\n";
  }

  // network-level: every parameter of a 2-layer toy net against FD
  {
    ConvNet net;
    net.layers.emplace_back(ConvLayer(4, 3, 3));
    net.layers.emplace_back(PreluLayer(4));
    net.layers.emplace_back(ConvLayer(3, 4, 3));
    init_weights(net, args.seed);
    const ImageBuffer input = random_patch(9, 9, 3, rng, 0.0, 1.0);
    const ImageBuffer target = random_patch(9, 9, 3, rng, 0.0, 1.0);

    forward(net, input);
    const LossEvaluation eval = l2_loss(net.activations.back(), target);
    backward(net, eval.gradient);

    double worst = 0.0;
    auto probe_params = [&](std::vector<double>& param, const std::vector<double>& grad) {
      for (size_t i = 0; i < param.size(); ++i) {
        const double saved = param[i];
        param[i] = saved + args.eps;
        ConvNet plus_net = net;
        const double plus = l2_loss(forward(plus_net, input), target).value;
        param[i] = saved - args.eps;
        ConvNet minus_net = net;
        const double minus = l2_loss(forward(minus_net, input), target).value;
        param[i] = saved;
        const double fd = (plus - minus) / (2 * args.eps);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        worst = std::max(worst, std::abs(fd - grad[i]) / denom);
      }
    };
    for (auto& layer : net.layers) {
      if (auto* conv = std::get_if<ConvLayer>(&layer)) {
        probe_params(conv->weights, conv->weight_grad);
        probe_params(conv->bias, conv->bias_grad);
      } else {
        auto& prelu = std::get<PreluLayer>(layer);
        probe_params(prelu.slope, prelu.slope_grad);
      }
    }
    const bool ok = worst < 1e-3;
    all_ok &= ok;
    std::cout << (ok ? "PASS" : "FAIL") << "  network(l2)  max rel err " << worst << "\n";
  }

  return all_ok ? kExitOk : kExitVerification;
}

// ---- demo ----------------------------------------------------------------------

struct DemoArgs {
  std::string name;
  uint64_t seed = 7;
  int draws = 100;
  std::string out;
};

// Noisy vertical step edge: mean SSIM at the column next to the edge, per sigma.
void demo_edge(std::ostream& out, uint64_t seed, int draws) {
  const int size = 96;
  const int edge_col = size / 2;
  ImageBuffer clean(size, size, 1);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) clean.at(r, c) = c < edge_col ? 0.25 : 0.75;

  out << "sigma,mean_ssim_edge_adjacent\n";
  for (double sigma : {1.0, 3.0, 9.0}) {
    double sum = 0.0;
    long count = 0;
    for (int draw = 0; draw < draws; ++draw) {
      const ImageBuffer noisy = apply_noise(clean, 0.0, 0.01, seed + draw);
      for (int r = 28; r < size - 28; r += 4) {
        sum += ssim_point(noisy, clean, r, edge_col, sigma)[0].ssim;
        ++count;
      }
    }
    out << sigma << "," << sum / count << "\n";
  }
}

// Constant background c vs c + bias: SSIM as a function of background level.
void demo_bias(std::ostream& out, double bias = 0.1) {
  out << "background,ssim\n";
  for (int i = 1; i <= 8; ++i) {
    const double c = 0.1 * i;
    const ImageBuffer x(11, 11, 1, c);
    const ImageBuffer y(11, 11, 1, c + bias);
    out << c << "," << ssim_point(x, y, 5, 5, 1.5)[0].ssim << "\n";
  }
}

int run_demo(const DemoArgs& args) {
  std::ostringstream csv;
  if (args.name == "edge") {
    demo_edge(csv, args.seed, args.draws);
  } else if (args.name == "bias") {
    demo_bias(csv);
  } else {
    std::cerr << "demo: unknown demo '" << args.name << "' (expected edge or bias)\n";
    return kExitInput;
  }
  if (args.out.empty()) {
    std::cout << csv.str();
  } else {
    std::ofstream out(args.out);
    if (!out) throw std::runtime_error("cannot write demo CSV: " + args.out);
    out << csv.str();
    std::cout << "csv: " << args.out << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"image restoration losses: corruption, training, metrics, verification"};
  app.require_subcommand(1);

  CorruptArgs corrupt_args;
  CLI::App* corrupt = app.add_subcommand("corrupt", "corrupt clean images into training inputs");
  corrupt->add_option("--task", corrupt_args.task, "denoise_demosaick or superres")
      ->capture_default_str();
  corrupt->add_option("--a", corrupt_args.a, "signal-dependent variance coefficient")
      ->capture_default_str();
  corrupt->add_option("--b", corrupt_args.b, "constant variance coefficient")
      ->capture_default_str();
  corrupt->add_option("--pattern", corrupt_args.pattern, "bayer layout: rggb, bggr, grbg, gbrg")
      ->capture_default_str();
  corrupt->add_option("--noise-model", corrupt_args.noise_model, "gaussian or poisson")
      ->capture_default_str();
  corrupt->add_option("--scale", corrupt_args.scale, "superres factor")->capture_default_str();
  corrupt->add_option("--seed", corrupt_args.seed, "corruption seed")->capture_default_str();
  corrupt->add_option("--out-dir", corrupt_args.out_dir, "output directory")
      ->capture_default_str();
  corrupt->add_option("inputs", corrupt_args.inputs, "clean images (PGM/PPM/PFM)")->required();
  attach_config(corrupt);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train the restoration net on a manifest");
  train_cmd->add_option("--manifest", train_args.manifest, "input<TAB>target manifest")
      ->required();
  train_cmd->add_option("--val-manifest", train_args.val_manifest,
                        "validation manifest (full images)");
  train_cmd->add_option("--loss", train_args.loss, "l1, l2, ssim, msssim, mix")
      ->capture_default_str();
  train_cmd->add_option("--switch-loss", train_args.switch_loss,
                        "kind@epoch, switch the training loss at that epoch");
  train_cmd->add_option("--epochs", train_args.epochs)->capture_default_str();
  train_cmd->add_option("--lr", train_args.lr, "learning rate (negative = per-loss default)")
      ->capture_default_str();
  train_cmd->add_option("--momentum", train_args.momentum)->capture_default_str();
  train_cmd->add_option("--batch", train_args.batch)->capture_default_str();
  train_cmd->add_option("--patch", train_args.patch, "training patch size")
      ->capture_default_str();
  train_cmd->add_option("--stride", train_args.stride, "patch extraction stride")
      ->capture_default_str();
  train_cmd->add_option("--seed", train_args.seed)->capture_default_str();
  train_cmd->add_option("--ssim-sigma", train_args.ssim_sigma, "sigma of the plain SSIM loss")
      ->capture_default_str();
  train_cmd->add_option("--mix-alpha", train_args.mix_alpha)->capture_default_str();
  train_cmd->add_option("--net", train_args.net, "default or small")->capture_default_str();
  train_cmd->add_option("--checkpoint", train_args.checkpoint)->capture_default_str();
  train_cmd->add_option("--history", train_args.history, "per-epoch CSV")->capture_default_str();
  attach_config(train_cmd);

  RestoreArgs restore_args;
  CLI::App* restore_cmd = app.add_subcommand("restore", "run a checkpoint over full images");
  restore_cmd->add_option("--checkpoint", restore_args.checkpoint)->required();
  restore_cmd->add_option("--out-dir", restore_args.out_dir,
                          "output directory (default: next to inputs)");
  restore_cmd->add_option("--suffix", restore_args.suffix)->capture_default_str();
  restore_cmd->add_option("inputs", restore_args.inputs, "images to restore")->required();
  attach_config(restore_cmd);

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "metric report over restored/reference pairs");
  eval_cmd->add_option("--manifest", eval_args.manifest, "restored<TAB>reference manifest")
      ->required();
  eval_cmd->add_option("--out", eval_args.out, "CSV path (default: stdout)");
  eval_cmd->add_option("--ssim-sigma", eval_args.ssim_sigma)->capture_default_str();
  eval_cmd->add_option("--msssim-levels", eval_args.msssim_levels)->capture_default_str();
  attach_config(eval_cmd);

  GradcheckArgs grad_args;
  CLI::App* grad_cmd =
      app.add_subcommand("gradcheck", "analytic vs finite-difference gradient verification");
  grad_cmd->add_option("--patches", grad_args.patches, "random 31x31x3 patches per loss")
      ->capture_default_str();
  grad_cmd->add_option("--seed", grad_args.seed)->capture_default_str();
  grad_cmd->add_option("--eps", grad_args.eps)->capture_default_str();
  grad_cmd->add_option("--perturb-analytic", grad_args.perturb_analytic,
                       "debug: inject gradient error, the check must then fail");
  attach_config(grad_cmd);

  DemoArgs demo_args;
  CLI::App* demo_cmd = app.add_subcommand("demo", "SSIM edge/bias analysis CSVs");
  demo_cmd->add_option("--demo", demo_args.name, "edge or bias")->required();
  demo_cmd->add_option("--seed", demo_args.seed)->capture_default_str();
  demo_cmd->add_option("--draws", demo_args.draws, "noise draws for the edge demo")
      ->capture_default_str();
  demo_cmd->add_option("--out", demo_args.out, "CSV path (default: stdout)");
  attach_config(demo_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (corrupt->parsed()) return run_corrupt(corrupt_args);
    if (train_cmd->parsed()) return run_train(train_args);
    if (restore_cmd->parsed()) return run_restore(restore_args);
    if (eval_cmd->parsed()) return run_eval(eval_args);
    if (grad_cmd->parsed()) return run_gradcheck(grad_args);
    if (demo_cmd->parsed()) return run_demo(demo_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
