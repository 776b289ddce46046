#include "vat/pseudolabel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json_util.hpp"

namespace vat {

void SoftLabel::check_valid(const char* what) const {
  if (probs.empty()) {
    throw std::invalid_argument(std::string(what) + ": empty probability vector");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) {
      throw std::invalid_argument(std::string(what) + ": negative probability");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) {
    throw std::invalid_argument(std::string(what) + ": probabilities sum to " +
                                std::to_string(sum));
  }
  if (!(weight >= 0.0 && weight <= 1.0)) {
    throw std::invalid_argument(std::string(what) + ": weight outside [0,1]");
  }
}

double iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x2, b.x2) - std::max(a.x1, b.x1));
  const double iy = std::max(0.0, std::min(a.y2, b.y2) - std::max(a.y1, b.y1));
  const double inter = ix * iy;
  const double area_a = std::max(0.0, a.x2 - a.x1) * std::max(0.0, a.y2 - a.y1);
  const double area_b = std::max(0.0, b.x2 - b.x1) * std::max(0.0, b.y2 - b.y1);
  const double uni = area_a + area_b - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Box> nms(std::vector<Box> boxes, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("nms: iou_threshold must be in [0,1]");
  }
  // Deterministic order: score descending, geometry as the tie-break.
  std::stable_sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.label != b.label) return a.label < b.label;
    return std::tie(a.x1, a.y1, a.x2, a.y2) < std::tie(b.x1, b.y1, b.x2, b.y2);
  });
  std::vector<Box> kept;
  for (const Box& candidate : boxes) {
    bool suppressed = false;
    for (const Box& winner : kept) {
      if (winner.label == candidate.label && iou(winner, candidate) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(candidate);
  }
  return kept;
}

const char* to_string(PseudoSource s) { return s == PseudoSource::LQ ? "LQ" : "R"; }

double Prediction::max_confidence() const {
  if (kind == PredictionKind::classification) {
    if (soft.probs.empty()) return 0.0;
    return *std::max_element(soft.probs.begin(), soft.probs.end());
  }
  double best = 0.0;
  for (const Box& b : boxes) best = std::max(best, b.score);
  return best;
}

Prediction merge_max_confidence(const Prediction& pred_lq, const Prediction& pred_r,
                                double iou_threshold) {
  if (pred_lq.kind != pred_r.kind) {
    throw std::invalid_argument("merge_max_confidence: prediction kinds differ");
  }
  if (pred_lq.kind == PredictionKind::classification) {
    // Ties go to the restored view.
    Prediction out = pred_lq.max_confidence() > pred_r.max_confidence() ? pred_lq : pred_r;
    return out;
  }
  Prediction out;
  out.kind = PredictionKind::detection;
  std::vector<Box> all = pred_lq.boxes;
  all.insert(all.end(), pred_r.boxes.begin(), pred_r.boxes.end());
  out.boxes = nms(std::move(all), iou_threshold);
  out.source =
      pred_lq.max_confidence() > pred_r.max_confidence() ? PseudoSource::LQ : PseudoSource::R;
  return out;
}

std::vector<PseudoLabel> filter_by_uncertainty(std::vector<PseudoLabel> labels, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("filter_by_uncertainty: epsilon must be in (0,1]");
  }
  for (PseudoLabel& l : labels) {
    l.kept = l.uncertainty < epsilon;
  }
  return labels;
}

namespace {

std::vector<PseudoLabel> classify_batch(ClassifierNet& model, const torch::Tensor& batch,
                                        const ReferenceBank& bank, PseudoSource source) {
  torch::NoGradGuard guard;
  auto probs = torch::softmax(model->forward(batch), 1).to(torch::kFloat64);
  const auto estimates = estimate_uncertainty_batch(bank, model->embed(batch));
  std::vector<PseudoLabel> out(static_cast<size_t>(batch.size(0)));
  for (std::int64_t i = 0; i < batch.size(0); ++i) {
    PseudoLabel& l = out[static_cast<size_t>(i)];
    l.label.kind = PredictionKind::classification;
    l.label.source = source;
    auto row = probs[i];
    l.label.soft.probs.assign(row.data_ptr<double>(), row.data_ptr<double>() + row.numel());
    l.uncertainty = estimates[static_cast<size_t>(i)].uncertainty;
  }
  return out;
}

}  // namespace

std::vector<PseudoLabel> clean_labels(ClassifierNet& model, const torch::Tensor& batch,
                                      const ReferenceBank& bank) {
  return classify_batch(model, batch, bank, PseudoSource::R);
}

std::vector<PseudoLabel> degraded_pseudo_labels(ClassifierNet& model,
                                                const torch::Tensor& batch_lq,
                                                const torch::Tensor& batch_r,
                                                const ReferenceBank& bank) {
  if (batch_lq.sizes() != batch_r.sizes()) {
    throw std::invalid_argument("degraded_pseudo_labels: view batch shapes differ");
  }
  auto from_lq = classify_batch(model, batch_lq, bank, PseudoSource::LQ);
  auto from_r = classify_batch(model, batch_r, bank, PseudoSource::R);
  std::vector<PseudoLabel> out(from_lq.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i].label = merge_max_confidence(from_lq[i].label, from_r[i].label);
    out[i].uncertainty = out[i].label.source == PseudoSource::LQ ? from_lq[i].uncertainty
                                                                 : from_r[i].uncertainty;
  }
  return out;
}

std::vector<bool> classes_present(const std::vector<Box>& boxes, int num_classes) {
  if (num_classes <= 0) {
    throw std::invalid_argument("classes_present: num_classes must be positive");
  }
  std::vector<bool> mask(static_cast<size_t>(num_classes), false);
  for (const Box& b : boxes) {
    if (b.label < 0 || b.label >= num_classes) {
      throw std::invalid_argument("classes_present: box label out of range");
    }
    mask[static_cast<size_t>(b.label)] = true;
  }
  return mask;
}

void dump_pseudo_labels(const std::filesystem::path& path, int epoch,
                        const std::vector<PseudoLabel>& labels) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) {
    throw std::runtime_error("dump_pseudo_labels: cannot open " + path.string());
  }
  for (const PseudoLabel& l : labels) {
    json j;
    j["epoch"] = epoch;
    j["id"] = l.sample_id;
    j["source"] = to_string(l.label.source);
    j["u"] = l.uncertainty;
    j["kept"] = l.kept;
    out << j.dump() << "\n";
  }
}

}  // namespace vat
