#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vat {

// Degradation synthesis parameters. Low-light is pure gamma; haze is the
// atmospheric scattering model with a synthetic depth proxy. The pretrain
// ranges are disjoint from the train ranges so the frozen restorer carries an
// honest generalization gap onto the degraded stream.
struct DataConfig {
  int image_size = 32;
  int num_classes = 10;
  int clean_train = 1200;
  int clean_test = 400;
  int degraded_train = 1000;
  int degraded_test = 400;
  int restoration_pretrain = 600;
  int restoration_val = 120;
  std::string degradation = "lowlight";  // "lowlight" | "haze"
  std::array<double, 2> train_gamma{3.0, 5.0};
  std::array<double, 2> pretrain_gamma{1.5, 3.0};
  // Haze betas come in two scales; each image draws one scale, then a beta.
  std::array<double, 2> train_beta_scale_a{1.2, 1.8};
  std::array<double, 2> train_beta_scale_b{1.8, 2.6};
  std::array<double, 2> pretrain_beta_scale_a{0.3, 0.6};
  std::array<double, 2> pretrain_beta_scale_b{0.6, 1.0};
  std::array<double, 2> airlight{0.7, 0.9};
  std::string depth_mode = "radial";  // "constant" | "radial"
};

struct PretrainConfig {
  int task_epochs = 10;
  double task_lr = 1e-3;
  int task_batch = 64;
  int task_width = 32;
  int restoration_epochs = 8;
  double restoration_lr = 1e-3;
  int restoration_batch = 32;
  int restoration_width = 16;
  // Epochs at which a restoration snapshot is kept for the quality sweep.
  std::vector<int> restoration_snapshots{1, 2, 8};
};

// VaT training loop parameters (Algorithm defaults: AdamW, lr 1e-4, batch 4).
struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 4;
  int epochs = 50;
  double alpha = 1.0;    // Beta(alpha, alpha) for the mixup lambda
  double epsilon = 0.5;  // pseudo-label uncertainty threshold, in (0, 1]
  double weight_cyc = 1.0;
  double weight_mle = 1.0;
  int base_dim = 8;      // translator channel width at the top level
  int gate_dim = 8;
  std::string mixup_mode = "uncertainty";  // "off" | "plain" | "uncertainty"
  bool use_gate = true;
  int checkpoint_every = 0;  // epochs between checkpoints, 0 = final only
  int val_images = 200;      // per-epoch validation subset, 0 disables
  std::string device = "cpu";

  void validate() const;  // throws std::invalid_argument
};

struct UncertaintyConfig {
  double density_quantile = 0.05;
  int bank_size = 512;  // 0 = all of clean_train
};

struct SweepConfig {
  std::vector<int> base_dims{4, 8, 16, 32, 48};
  int sweep_epochs = 2;  // shortened VaT training inside sweeps/ablations
};

struct Config {
  std::uint64_t seed = 0;
  DataConfig data;
  PretrainConfig pretrain;
  TrainConfig train;
  UncertaintyConfig uncertainty;
  SweepConfig sweep;

  static Config defaults() { return Config{}; }
  // Defaults overlaid with the JSON document at `path` (missing keys keep
  // their defaults; unknown keys are rejected).
  static Config load(const std::filesystem::path& path);
  static Config from_json_string(const std::string& text);
  std::string to_json_string(int indent = 2) const;
};

}  // namespace vat
