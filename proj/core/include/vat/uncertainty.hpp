#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "vat/config.hpp"

namespace vat {

// Labeled embedding bank drawn from the clean stream, plus the two quantities
// the estimator needs: a Gaussian kernel bandwidth (Scott's rule over the
// bank) and a log-density threshold (a low quantile of the bank's own
// leave-one-out kernel densities) below which a query counts as off-manifold.
struct ReferenceBank {
  torch::Tensor embeddings;  // (N, d) float64
  torch::Tensor labels;      // (N,) int64
  int num_classes = 0;
  double bandwidth = 0.0;
  double log_density_threshold = 0.0;

  std::int64_t size() const { return embeddings.defined() ? embeddings.size(0) : 0; }
  void save(const std::filesystem::path& path) const;
  static ReferenceBank load(const std::filesystem::path& path);
};

ReferenceBank build_reference_bank(const torch::Tensor& embeddings,
                                   const std::vector<int>& labels, int num_classes,
                                   const UncertaintyConfig& config, std::uint64_t seed);

// u = 1 - nw_confidence * density_gate. The Nadaraya-Watson posterior over
// classes supplies the confidence; the unnormalized kernel density, gated
// against the bank's own density quantile, discounts queries the bank has
// never seen. Kernel sums are unnormalized on purpose: a far-away reference
// point then contributes exp(-huge) ~ 0 instead of rescaling every weight.
struct UncertaintyEstimate {
  double uncertainty = 1.0;           // in [0, 1]
  double nw_confidence = 0.0;         // max posterior weight, in [0, 1]
  double density_gate = 0.0;          // in [0, 1]
  double log_density = 0.0;
  std::vector<double> class_weights;  // NW posterior over classes, sums to 1
};

UncertaintyEstimate estimate_uncertainty(const ReferenceBank& bank,
                                         const torch::Tensor& embedding);
std::vector<UncertaintyEstimate> estimate_uncertainty_batch(const ReferenceBank& bank,
                                                            const torch::Tensor& embeddings);

// Mixup weighting: the certainty c = 1 - u of a prediction.
inline double certainty_weight(const UncertaintyEstimate& e) {
  const double c = 1.0 - e.uncertainty;
  return c < 0.0 ? 0.0 : (c > 1.0 ? 1.0 : c);
}

}  // namespace vat
