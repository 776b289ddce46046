#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "vat/config.hpp"
#include "vat/nets.hpp"
#include "vat/pseudolabel.hpp"
#include "vat/uncertainty.hpp"

namespace vat {

struct LossBreakdown {
  double cyc_forward = 0.0;
  double cyc_backward = 0.0;
  double mle_clean = 0.0;
  double mle_mix = 0.0;
  double total = 0.0;
};

// The frozen side of the pipeline: restorer R, classifier D, and the
// uncertainty reference bank built from D's clean embeddings.
struct FrozenModels {
  RestorationNet restoration{nullptr};
  ClassifierNet classifier{nullptr};
  ReferenceBank bank;
  int num_classes = 0;

  void freeze();  // eval mode + requires_grad(false) on both nets
};

// Reconstructs both nets from their checkpoint sidecars (task.pt,
// restoration.pt, bank.pt under `models_dir`). `restoration_name` selects an
// alternative restorer snapshot for the quality sweep.
FrozenModels load_frozen_models(const std::filesystem::path& models_dir,
                                const std::string& restoration_name = "restoration.pt");

// Fused source-domain view: gated combination of the degraded image and its
// restoration, or the plain restoration when the gate is disabled.
torch::Tensor fuse_views(VatModules& m, const torch::Tensor& i_lq, const torch::Tensor& i_r,
                         bool use_gate);

// Full bridge from a raw image to the classifier's input domain:
// T_A(fuse(x, R(x))). R runs without gradient; the bridge builds the graph.
torch::Tensor vat_forward(RestorationNet& restoration, VatModules& m, const torch::Tensor& x,
                          bool use_gate);

// Both cycle terms (mean absolute error):
//   forward:  || I_F - T_B(T_A(I_F)) ||,  I_F the fused view of (i_lq, i_r)
//   backward: || i_hq - T_A(T_B(i_hq)) ||  (no gate: clean images have no
//                                           restored counterpart to fuse)
std::pair<torch::Tensor, torch::Tensor> cycle_loss(VatModules& m, const torch::Tensor& i_lq,
                                                   const torch::Tensor& i_r,
                                                   const torch::Tensor& i_hq, bool use_gate);
// Same, with the fused view already computed (lets the train step share one
// gate evaluation between the cycle and mixup paths).
std::pair<torch::Tensor, torch::Tensor> cycle_terms(VatModules& m, const torch::Tensor& fused,
                                                    const torch::Tensor& i_hq);

struct MixupResult {
  torch::Tensor i_mix;  // CHW
  SoftLabel y_mix;
  bool skipped = false;  // both certainty weights were zero
};

// i_mix = lambda * fuse(i_lq, i_r) + (1 - lambda) * i_hq
// y_mix ~ c_lq * lambda * y_lq + c_hq * (1 - lambda) * y_hq, renormalized,
// with c_lq = 1 - u(y_lq) and c_hq = y_hq.weight. The lambda in {0, 1}
// corners return the pure image and pure label exactly.
MixupResult mixup(VatModules& m, const torch::Tensor& i_lq, const torch::Tensor& i_r,
                  const torch::Tensor& i_hq, const PseudoLabel& y_lq, const SoftLabel& y_hq,
                  double lambda, bool use_gate);

// Soft-target cross entropies of Eq-style mle terms:
//   mle_clean = CE(D(T_A(fuse(i_hq, i_r_hq))), y_hq)
//   mle_mix   = CE(D(T_A(i_mix)), y_mix), zero when i_mix is undefined
// Gradients flow through the bridge into D's graph; D itself stays frozen.
std::pair<torch::Tensor, torch::Tensor> mle_loss(ClassifierNet& classifier, VatModules& m,
                                                 const torch::Tensor& i_hq,
                                                 const torch::Tensor& i_r_hq,
                                                 const torch::Tensor& y_hq,
                                                 const torch::Tensor& i_mix,
                                                 const torch::Tensor& y_mix, bool use_gate);

// One training iteration's data, prepared without gradients. The mixed
// images are rebuilt inside assemble_losses from (mix_idx, mix_lambda) so the
// gate's contribution to i_mix stays in the graph.
struct IterationBatch {
  torch::Tensor x_lq;      // (B,3,H,W) degraded stream
  torch::Tensor i_r;       // R(x_lq)
  torch::Tensor x_hq;      // (B,3,H,W) clean stream (unpaired)
  torch::Tensor i_r_hq;    // R(x_hq)
  torch::Tensor y_hq;      // (B,C) soft targets from D
  torch::Tensor mix_idx;   // (K,) int64 batch positions that survived the filter
  torch::Tensor mix_lambda;  // (K,)
  torch::Tensor y_mix;     // (K,C) renormalized mixed targets
};

struct LossTensors {
  torch::Tensor cyc_forward, cyc_backward, mle_clean, mle_mix, total;
  LossBreakdown detach() const;
};

LossTensors assemble_losses(ClassifierNet& classifier, VatModules& m, const IterationBatch& batch,
                            const TrainConfig& config);

// Test/diagnostic hooks into the training loop.
struct TrainHooks {
  std::optional<double> forced_lambda;  // overrides the Beta(alpha,alpha) draw
  int max_iterations = 0;               // 0 = run all epochs
  std::filesystem::path dump_pseudo;    // JSONL diagnostics path, empty = off
  std::string restoration_checkpoint;   // alternate restorer snapshot, empty = default
  std::function<void(int, const LossBreakdown&)> on_iteration;
};

struct TrainResult {
  std::vector<LossBreakdown> history;   // per iteration
  std::vector<double> val_accuracy;     // per epoch, on a degraded_test subset
  double frozen_r_checksum_before = 0, frozen_r_checksum_after = 0;
  double frozen_d_checksum_before = 0, frozen_d_checksum_after = 0;
  int iterations = 0;
  std::filesystem::path out_dir;
};

// Runs the full self-training loop over the unpaired degraded/clean streams:
// restore, cycle losses, clean labels, pseudo-label merge + uncertainty
// filter, mixup, mle terms, one AdamW step over gate + both translators.
// Emits history.csv, the deployed checkpoint (gate + T_A), optional epoch
// checkpoints, and run.json under out_dir. Throws on non-finite loss.
TrainResult train_vat(const Config& config, const std::filesystem::path& data_root,
                      const std::filesystem::path& models_dir,
                      const std::filesystem::path& out_dir, const TrainHooks& hooks = {});

}  // namespace vat
