#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vat/config.hpp"
#include "vat/image.hpp"
#include "vat/nets.hpp"

namespace vat {

// Fraction of argmax matches. Throws on empty or mismatched inputs.
double accuracy(const std::vector<int>& preds, const std::vector<int>& labels);

// Area under the ROC curve via the rank statistic (Mann-Whitney), ties
// credited 0.5. Requires both classes present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& binary_labels);

// Macro average of per-class one-vs-rest AUCs over softmax scores.
double macro_ovr_auc(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels, int num_classes);

// Peak signal-to-noise ratio on [0,1] images, capped at 100 dB.
double psnr(const ImageTensor& a, const ImageTensor& b);

// Structural similarity with the standard 11x11 Gaussian window (sigma 1.5,
// C1 = 0.01^2, C2 = 0.03^2), evaluated on the valid interior and averaged
// over channels.
double ssim(const ImageTensor& a, const ImageTensor& b);

// Spearman rank correlation (average ranks on ties).
double spearman_rank_correlation(const std::vector<double>& x, const std::vector<double>& y);

struct PipelineMetrics {
  std::string pipeline;  // degraded-direct | restored-direct | vat-translated
  double accuracy = 0.0;
  double auc = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::vector<double> per_class_accuracy;
};

struct EvalReport {
  std::vector<PipelineMetrics> pipelines;
  std::uint64_t seed = 0;
  std::string config_fingerprint;

  const PipelineMetrics& find(const std::string& name) const;  // throws if absent
  void write(const std::filesystem::path& dir) const;  // eval.csv + eval.json
};

// Runs the three inference pipelines over degraded_test: the frozen
// classifier on the raw degraded images, on the restorations, and on the
// bridge's translations. Image-quality metrics compare each pipeline's input
// to D against the clean references. `vat_dir` empty skips the third
// pipeline; `restoration_name` selects a restorer snapshot.
EvalReport evaluate_pipelines(const Config& config, const std::filesystem::path& data_root,
                              const std::filesystem::path& models_dir,
                              const std::filesystem::path& vat_dir,
                              const std::string& restoration_name = "restoration.pt");

// Fig-style fusion diagnostic: degraded | restored | fused | gate heatmap.
ImageTensor gate_heatmap(VatModules& m, const ImageTensor& i_lq, const ImageTensor& i_r);

struct SweepRow {
  std::string name;
  double x = 0.0;  // restorer val PSNR, or translator parameter count
  double accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double correlation = 0.0;  // Spearman over (x, accuracy)
  std::filesystem::path table_path;
  std::filesystem::path plot_path;
};

// Trains a short bridge against each restoration snapshot (restoration_ep*.pt
// under models_dir; >= 3 required, validation PSNR strictly increasing) and
// reports downstream accuracy against restorer quality.
SweepResult sweep_restoration_quality(const Config& config,
                                      const std::filesystem::path& data_root,
                                      const std::filesystem::path& models_dir,
                                      const std::filesystem::path& out_dir);

// Same protocol across translator widths; x is the translator parameter count.
SweepResult sweep_translator_size(const Config& config, const std::filesystem::path& data_root,
                                  const std::filesystem::path& models_dir,
                                  const std::filesystem::path& out_dir);

struct AblationRow {
  std::string name;
  double weight_cyc = 1.0;
  double weight_mle = 1.0;
  bool use_gate = true;
  std::string mixup_mode = "uncertainty";
  double accuracy = 0.0;
};

// One short run per component combination, reported in the canonical row
// order (mle-only, cyc-only, cyc+mle, +gate, +plain mixup, full).
std::vector<AblationRow> ablation_grid(const Config& config,
                                       const std::filesystem::path& data_root,
                                       const std::filesystem::path& models_dir,
                                       const std::filesystem::path& out_dir);

}  // namespace vat
