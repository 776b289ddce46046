#include "vat/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "vat/rng.hpp"

namespace vat {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Linear-interpolation quantile over a copy of `values`.
double quantile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const size_t lo = static_cast<size_t>(std::floor(pos));
  const size_t hi = static_cast<size_t>(std::ceil(pos));
  const double frac = pos - static_cast<double>(lo);
  return values[lo] * (1.0 - frac) + values[hi] * frac;
}

// log kernel weights of one query against the whole bank: -(||q - x_i||^2) / (2 h^2).
std::vector<double> log_kernels(const ReferenceBank& bank, const double* query) {
  const auto n = bank.embeddings.size(0);
  const auto d = bank.embeddings.size(1);
  const double* data = bank.embeddings.data_ptr<double>();
  const double inv = 1.0 / (2.0 * bank.bandwidth * bank.bandwidth);
  std::vector<double> out(static_cast<size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    const double* row = data + i * d;
    double sq = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      const double diff = query[j] - row[j];
      sq += diff * diff;
    }
    out[static_cast<size_t>(i)] = -sq * inv;
  }
  return out;
}

double log_sum_exp(const std::vector<double>& log_terms, std::int64_t skip = -1) {
  double m = kNegInf;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(log_terms.size()); ++i) {
    if (i != skip) m = std::max(m, log_terms[static_cast<size_t>(i)]);
  }
  if (m == kNegInf) return kNegInf;
  double sum = 0.0;
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(log_terms.size()); ++i) {
    if (i != skip) sum += std::exp(log_terms[static_cast<size_t>(i)] - m);
  }
  return m + std::log(sum);
}

}  // namespace

void ReferenceBank::save(const std::filesystem::path& path) const {
  std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  archive.write("embeddings", embeddings);
  archive.write("labels", labels);
  archive.write("num_classes", torch::tensor(static_cast<std::int64_t>(num_classes)));
  archive.write("bandwidth", torch::tensor(bandwidth, torch::kFloat64));
  archive.write("log_density_threshold", torch::tensor(log_density_threshold, torch::kFloat64));
  archive.save_to(path.string());
}

ReferenceBank ReferenceBank::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("ReferenceBank::load: missing " + path.string());
  }
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  ReferenceBank bank;
  torch::Tensor scalar;
  archive.read("embeddings", bank.embeddings);
  archive.read("labels", bank.labels);
  archive.read("num_classes", scalar);
  bank.num_classes = static_cast<int>(scalar.item<std::int64_t>());
  archive.read("bandwidth", scalar);
  bank.bandwidth = scalar.item<double>();
  archive.read("log_density_threshold", scalar);
  bank.log_density_threshold = scalar.item<double>();
  return bank;
}

ReferenceBank build_reference_bank(const torch::Tensor& embeddings,
                                   const std::vector<int>& labels, int num_classes,
                                   const UncertaintyConfig& config, std::uint64_t seed) {
  if (!embeddings.defined() || embeddings.dim() != 2) {
    throw std::invalid_argument("build_reference_bank: embeddings must be (N, d)");
  }
  if (static_cast<size_t>(embeddings.size(0)) != labels.size()) {
    throw std::invalid_argument("build_reference_bank: embeddings/labels size mismatch");
  }
  if (embeddings.size(0) < 2) {
    throw std::invalid_argument("build_reference_bank: need at least 2 reference points");
  }
  if (!(config.density_quantile > 0.0 && config.density_quantile < 1.0)) {
    throw std::invalid_argument("build_reference_bank: density_quantile must be in (0,1)");
  }
  for (int label : labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("build_reference_bank: label out of range");
    }
  }

  // Optional subsample to the configured bank size.
  std::vector<std::int64_t> keep(labels.size());
  std::iota(keep.begin(), keep.end(), std::int64_t{0});
  if (config.bank_size > 0 && static_cast<int>(keep.size()) > config.bank_size) {
    auto rng = make_rng(seed, "bank-subsample");
    std::shuffle(keep.begin(), keep.end(), rng);
    keep.resize(static_cast<size_t>(config.bank_size));
    std::sort(keep.begin(), keep.end());
  }

  ReferenceBank bank;
  bank.num_classes = num_classes;
  auto idx = torch::tensor(keep);
  bank.embeddings = embeddings.detach().to(torch::kFloat64).index_select(0, idx).contiguous();
  std::vector<std::int64_t> kept_labels;
  kept_labels.reserve(keep.size());
  for (std::int64_t i : keep) kept_labels.push_back(labels[static_cast<size_t>(i)]);
  bank.labels = torch::tensor(kept_labels);

  // Scott's rule: h = mean per-dimension std * N^(-1/(d+4)), floored away
  // from zero so a degenerate bank still yields finite kernels.
  const auto n = bank.embeddings.size(0);
  const auto d = bank.embeddings.size(1);
  const double mean_std =
      bank.embeddings.std(/*dim=*/0, /*unbiased=*/false).mean().item<double>();
  bank.bandwidth = std::max(1e-6, mean_std * std::pow(static_cast<double>(n),
                                                      -1.0 / (static_cast<double>(d) + 4.0)));

  // Leave-one-out log densities of the bank against itself; the configured
  // quantile becomes the "on-manifold" reference level for the density gate.
  std::vector<double> loo(static_cast<size_t>(n));
  const double* data = bank.embeddings.data_ptr<double>();
  for (std::int64_t i = 0; i < n; ++i) {
    const auto lk = log_kernels(bank, data + i * d);
    loo[static_cast<size_t>(i)] = log_sum_exp(lk, /*skip=*/i);
  }
  bank.log_density_threshold = quantile(loo, config.density_quantile);
  return bank;
}

UncertaintyEstimate estimate_uncertainty(const ReferenceBank& bank,
                                         const torch::Tensor& embedding) {
  if (bank.size() == 0) {
    throw std::invalid_argument("estimate_uncertainty: empty reference bank");
  }
  torch::Tensor q = embedding.detach().to(torch::kFloat64).flatten().contiguous();
  if (q.size(0) != bank.embeddings.size(1)) {
    throw std::invalid_argument("estimate_uncertainty: embedding dimension mismatch");
  }

  UncertaintyEstimate e;
  e.class_weights.assign(static_cast<size_t>(bank.num_classes), 0.0);

  const auto lk = log_kernels(bank, q.data_ptr<double>());
  const double m = *std::max_element(lk.begin(), lk.end());
  e.log_density = log_sum_exp(lk);
  if (e.log_density == kNegInf || !std::isfinite(m)) {
    // Every kernel underflowed: the query is unresolvably far from the bank.
    e.uncertainty = 1.0;
    e.density_gate = 0.0;
    e.nw_confidence = 0.0;
    std::fill(e.class_weights.begin(), e.class_weights.end(), 1.0 / bank.num_classes);
    return e;
  }

  const std::int64_t* lab = bank.labels.data_ptr<std::int64_t>();
  double total = 0.0;
  for (size_t i = 0; i < lk.size(); ++i) {
    const double w = std::exp(lk[i] - m);  // scale cancels in the posterior
    e.class_weights[static_cast<size_t>(lab[i])] += w;
    total += w;
  }
  for (double& w : e.class_weights) w /= total;
  e.nw_confidence = *std::max_element(e.class_weights.begin(), e.class_weights.end());
  e.density_gate = std::min(1.0, std::exp(e.log_density - bank.log_density_threshold));
  e.uncertainty = std::clamp(1.0 - e.nw_confidence * e.density_gate, 0.0, 1.0);
  return e;
}

std::vector<UncertaintyEstimate> estimate_uncertainty_batch(const ReferenceBank& bank,
                                                            const torch::Tensor& embeddings) {
  if (embeddings.dim() != 2) {
    throw std::invalid_argument("estimate_uncertainty_batch: embeddings must be (B, d)");
  }
  std::vector<UncertaintyEstimate> out;
  out.reserve(static_cast<size_t>(embeddings.size(0)));
  for (std::int64_t i = 0; i < embeddings.size(0); ++i) {
    out.push_back(estimate_uncertainty(bank, embeddings[i]));
  }
  return out;
}

}  // namespace vat
