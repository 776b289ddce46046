#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

#include "vat/nets.hpp"
#include "vat/uncertainty.hpp"

namespace vat {

// Class-probability vector with an optional certainty weight (used by the
// mixup label arithmetic).
struct SoftLabel {
  std::vector<double> probs;
  double weight = 1.0;

  void check_valid(const char* what = "SoftLabel") const;  // throws std::invalid_argument
};

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  double score = 0;
  int label = 0;
};

double iou(const Box& a, const Box& b);

// Greedy class-wise non-maximum suppression: boxes sorted by descending
// score, each survivor suppresses same-class boxes overlapping above the
// threshold. Output scores are a subset of input scores.
std::vector<Box> nms(std::vector<Box> boxes, double iou_threshold);

enum class PredictionKind { classification, detection };
enum class PseudoSource { LQ, R };

const char* to_string(PseudoSource s);

// A frozen-model prediction on one view of a sample.
struct Prediction {
  PredictionKind kind = PredictionKind::classification;
  SoftLabel soft;           // classification payload
  std::vector<Box> boxes;   // detection payload
  PseudoSource source = PseudoSource::LQ;

  double max_confidence() const;
};

// Merge the degraded-view and restored-view predictions. Classification keeps
// the view with the larger max class probability (tie prefers the restored
// view, the pipeline's nominal domain); detection concatenates both box sets
// and resolves duplicates with class-wise NMS.
Prediction merge_max_confidence(const Prediction& pred_lq, const Prediction& pred_r,
                                double iou_threshold = 0.5);

struct PseudoLabel {
  std::string sample_id;
  Prediction label;
  double uncertainty = 1.0;  // in [0,1]
  bool kept = false;
};

// kept = (u < epsilon), strict; dropped entries stay in the list for
// diagnostics. epsilon must lie in (0, 1].
std::vector<PseudoLabel> filter_by_uncertainty(std::vector<PseudoLabel> labels, double epsilon);

// Y_HQ: the frozen classifier's soft predictions on a clean batch, with
// uncertainties from the reference bank. Clean images already sit in the
// high-quality domain, so the source is recorded as the restored view.
std::vector<PseudoLabel> clean_labels(ClassifierNet& model, const torch::Tensor& batch,
                                      const ReferenceBank& bank);

// Degraded-side pseudo-labels: D on the degraded view merged with D on the
// restored view, uncertainty taken from the winning view's embedding.
std::vector<PseudoLabel> degraded_pseudo_labels(ClassifierNet& model,
                                                const torch::Tensor& batch_lq,
                                                const torch::Tensor& batch_r,
                                                const ReferenceBank& bank);

// Detection-path helper for the dense-task rule that the mixed-label loss is
// only computed for classes actually present in the pseudo boxes. Not wired
// into an end-to-end detection pipeline here.
std::vector<bool> classes_present(const std::vector<Box>& boxes, int num_classes);

// Appends one JSONL diagnostic line per label: {epoch, id, source, u, kept}.
void dump_pseudo_labels(const std::filesystem::path& path, int epoch,
                        const std::vector<PseudoLabel>& labels);

}  // namespace vat
