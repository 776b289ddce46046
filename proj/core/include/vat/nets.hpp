#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vat/config.hpp"
#include "vat/image.hpp"

namespace vat {

// One-time process setup for reproducible runs: single-threaded torch and a
// fixed global seed. Cheap to call repeatedly.
void set_global_determinism(std::uint64_t seed);

// HWC float image <-> CHW float tensor. Batches are NCHW.
torch::Tensor to_tensor(const ImageTensor& img);
torch::Tensor to_batch(const std::vector<ImageTensor>& imgs);
ImageTensor from_tensor(const torch::Tensor& chw);

// LayerNorm across the channel dimension of an NCHW tensor (each pixel's
// channel vector is normalized independently).
struct ChannelLayerNormImpl : torch::nn::Module {
  explicit ChannelLayerNormImpl(int dim);
  torch::Tensor forward(const torch::Tensor& x);

  torch::Tensor weight;
  torch::Tensor bias;
};
TORCH_MODULE(ChannelLayerNorm);

// Transformer block operating on feature maps: channel self-attention with a
// learnable temperature (attention over the channel dimension keeps the cost
// independent of spatial resolution) followed by a gated feed-forward with
// depthwise convolutions. Both halves are residual.
struct TransformerBlockImpl : torch::nn::Module {
  TransformerBlockImpl(int dim, double ffn_expansion = 2.0);
  torch::Tensor forward(torch::Tensor x);

  ChannelLayerNorm norm1{nullptr};
  torch::nn::Conv2d qkv{nullptr};
  torch::nn::Conv2d qkv_dw{nullptr};
  torch::nn::Conv2d attn_out{nullptr};
  torch::Tensor temperature;
  ChannelLayerNorm norm2{nullptr};
  torch::nn::Conv2d ffn_in{nullptr};
  torch::nn::Conv2d ffn_dw{nullptr};
  torch::nn::Conv2d ffn_out{nullptr};
};
TORCH_MODULE(TransformerBlock);

// Pixel-wise gated fusion of the degraded input and its restored counterpart:
//   fused = sigmoid(w) * degraded + (1 - sigmoid(w)) * restored
// where w is predicted from the concatenated pair. When both inputs agree the
// output equals them regardless of w, and in general the fused value stays
// inside the per-pixel envelope of the two inputs.
struct GatedFusionImpl : torch::nn::Module {
  explicit GatedFusionImpl(int hidden_dim, int channels = 3);

  torch::Tensor forward(const torch::Tensor& degraded, const torch::Tensor& restored);
  // sigmoid(w): the weight on the degraded branch, same shape as the inputs.
  torch::Tensor gate_map(const torch::Tensor& degraded, const torch::Tensor& restored);

  int hidden_dim = 0;
  torch::nn::Conv2d conv1{nullptr};
  torch::nn::Conv2d conv2{nullptr};
  torch::nn::Conv2d conv3{nullptr};
};
TORCH_MODULE(GatedFusion);

// Three-level U-shape translator built from transformer blocks, with strided
// downsampling, bilinear upsampling and skip connections. The network emits a
// residual on top of its input and clamps to [0,1]; configure_identity()
// zeroes the output projection, making the module exactly the identity on
// [0,1] images (the reference point for the cycle-consistency contracts).
struct UShapeTranslatorImpl : torch::nn::Module {
  explicit UShapeTranslatorImpl(int base_dim, int channels = 3);

  torch::Tensor forward(const torch::Tensor& x);
  // Re-zero the output projection so the module maps x -> x again.
  void configure_identity();

  int base_dim = 0;

  torch::nn::Conv2d embed{nullptr};
  TransformerBlock enc1{nullptr};
  torch::nn::Conv2d down1{nullptr};
  TransformerBlock enc2{nullptr};
  torch::nn::Conv2d down2{nullptr};
  TransformerBlock bottleneck{nullptr};
  torch::nn::Conv2d up2{nullptr};
  torch::nn::Conv2d fuse2{nullptr};
  TransformerBlock dec2{nullptr};
  torch::nn::Conv2d up1{nullptr};
  torch::nn::Conv2d fuse1{nullptr};
  TransformerBlock dec1{nullptr};
  torch::nn::Conv2d out_proj{nullptr};
};
TORCH_MODULE(UShapeTranslator);

// Small convolutional restorer used as the frozen model R. Residual with a
// clamped output, trained supervised on synthetic degraded/clean pairs.
struct RestorationNetImpl : torch::nn::Module {
  explicit RestorationNetImpl(int width, int channels = 3);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Sequential trunk{nullptr};
};
TORCH_MODULE(RestorationNet);

// Small convolutional classifier used as the frozen model D. Exposes the
// pooled penultimate embedding for the uncertainty reference bank.
struct ClassifierNetImpl : torch::nn::Module {
  ClassifierNetImpl(int width, int num_classes, int channels = 3);

  torch::Tensor forward(const torch::Tensor& x);
  // Pooled feature vector, shape (N, embedding_dim()).
  torch::Tensor embed(const torch::Tensor& x);
  int embedding_dim() const;

  torch::nn::Sequential features{nullptr};
  torch::nn::Linear head{nullptr};
  int feature_dim = 0;
};
TORCH_MODULE(ClassifierNet);

// --- checkpoints ------------------------------------------------------------

std::int64_t parameter_count(const torch::nn::Module& module);
// Order-stable sum of all parameter values; cheap fingerprint for asserting a
// frozen module was not touched by training.
double parameter_checksum(const torch::nn::Module& module);

// Serialized module plus a JSON sidecar (<path>.json) recording the format
// version, parameter count, checksum and any construction parameters the
// caller passes as a JSON object in `extra_json`.
void save_checkpoint(const torch::nn::Module& module, const std::filesystem::path& path,
                     const std::string& kind, const std::string& extra_json = "{}");
// Loads into an already-constructed module and cross-checks the sidecar.
void load_checkpoint(torch::nn::Module& module, const std::filesystem::path& path);
// Raw sidecar text for <path>.json (construction params live under "extra").
std::string read_checkpoint_meta(const std::filesystem::path& path);

// The trainable bridge: fusion gate plus both translators.
struct VatModules {
  GatedFusion gate{nullptr};
  UShapeTranslator t_a{nullptr};
  UShapeTranslator t_b{nullptr};

  static VatModules make(const TrainConfig& config);
  std::vector<torch::Tensor> parameters() const;
  void save(const std::filesystem::path& dir) const;
  void load(const std::filesystem::path& dir);
  // The deployed bridge is gate + forward translator only; the backward
  // translator exists purely to carry the cycle constraint during training.
  void save_a(const std::filesystem::path& dir) const;
  void load_a(const std::filesystem::path& dir);
  // Reconstructs the deployed bridge from the checkpoint sidecars alone (the
  // backward translator comes back untrained).
  static VatModules open_a(const std::filesystem::path& dir);
};

// --- frozen-model pretraining -----------------------------------------------

struct PretrainTaskResult {
  double train_loss = 0.0;
  double clean_test_accuracy = 0.0;
  std::filesystem::path checkpoint;
};

struct PretrainRestorationResult {
  // One entry per requested snapshot epoch, ascending.
  std::vector<int> snapshot_epochs;
  std::vector<double> val_psnr;
  std::vector<std::filesystem::path> checkpoints;
};

// Trains the classifier on clean_train and reports clean_test accuracy.
PretrainTaskResult pretrain_task_model(const std::filesystem::path& data_root,
                                       const PretrainConfig& config, int num_classes,
                                       std::uint64_t seed,
                                       const std::filesystem::path& out_dir);

// Trains the restorer on restoration_pretrain pairs, saving a checkpoint at
// each configured snapshot epoch (quality rises with epochs, giving a ladder
// of restoration strengths for the quality sweep).
PretrainRestorationResult pretrain_restoration_model(const std::filesystem::path& data_root,
                                                     const PretrainConfig& config,
                                                     std::uint64_t seed,
                                                     const std::filesystem::path& out_dir);

}  // namespace vat
