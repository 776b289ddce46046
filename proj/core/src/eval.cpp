#include "vat/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"
#include "vat/manifest.hpp"
#include "vat/plot.hpp"
#include "vat/rng.hpp"
#include "vat/synthdata.hpp"
#include "vat/trainer.hpp"

namespace vat {

double accuracy(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.empty() || preds.size() != labels.size()) {
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  }
  size_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

namespace {

// Ranks with ties averaged (1-based), the ROC/Spearman workhorse.
std::vector<double> average_ranks(const std::vector<double>& values) {
  const size_t n = values.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& binary_labels) {
  if (scores.empty() || scores.size() != binary_labels.size()) {
    throw std::invalid_argument("roc_auc: empty or mismatched inputs");
  }
  std::size_t pos = 0;
  for (int y : binary_labels) {
    if (y != 0 && y != 1) {
      throw std::invalid_argument("roc_auc: labels must be 0/1");
    }
    pos += static_cast<std::size_t>(y);
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) {
    throw std::invalid_argument("roc_auc: both classes must be present");
  }
  // Mann-Whitney through average ranks; tied pairs earn 0.5 credit.
  const auto ranks = average_ranks(scores);
  double rank_sum_pos = 0.0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (binary_labels[i] == 1) rank_sum_pos += ranks[i];
  }
  const double p = static_cast<double>(pos);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double macro_ovr_auc(const std::vector<std::vector<double>>& probs,
                     const std::vector<int>& labels, int num_classes) {
  if (probs.empty() || probs.size() != labels.size()) {
    throw std::invalid_argument("macro_ovr_auc: empty or mismatched inputs");
  }
  double sum = 0.0;
  int counted = 0;
  for (int c = 0; c < num_classes; ++c) {
    std::vector<double> scores;
    std::vector<int> binary;
    scores.reserve(probs.size());
    binary.reserve(probs.size());
    for (size_t i = 0; i < probs.size(); ++i) {
      scores.push_back(probs[i][static_cast<size_t>(c)]);
      binary.push_back(labels[i] == c ? 1 : 0);
    }
    const bool has_pos = std::find(binary.begin(), binary.end(), 1) != binary.end();
    const bool has_neg = std::find(binary.begin(), binary.end(), 0) != binary.end();
    if (!has_pos || !has_neg) continue;  // class absent from this split
    sum += roc_auc(scores, binary);
    ++counted;
  }
  if (counted == 0) {
    throw std::invalid_argument("macro_ovr_auc: no class with both positives and negatives");
  }
  return sum / counted;
}

double psnr(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b) || a.size() == 0) {
    throw std::invalid_argument("psnr: shape mismatch or empty image");
  }
  double mse = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    const double d = static_cast<double>(a.values[i]) - static_cast<double>(b.values[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(a.values.size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow);
  const double c = (kSsimWindow - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < kSsimWindow; ++i) {
    w[static_cast<size_t>(i)] = std::exp(-(i - c) * (i - c) / (2.0 * kSsimSigma * kSsimSigma));
    sum += w[static_cast<size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Separable valid-region Gaussian filter on an H x W double plane.
std::vector<double> gaussian_valid(const std::vector<double>& plane, int h, int w,
                                   const std::vector<double>& win, int& oh, int& ow) {
  const int k = kSsimWindow;
  ow = w - k + 1;
  oh = h - k + 1;
  std::vector<double> horiz(static_cast<size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += win[static_cast<size_t>(t)] * plane[static_cast<size_t>(y) * w + x + t];
      horiz[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int t = 0; t < k; ++t) s += win[static_cast<size_t>(t)] * horiz[static_cast<size_t>(y + t) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageTensor& a, const ImageTensor& b) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument("ssim: shape mismatch");
  }
  if (a.height < kSsimWindow || a.width < kSsimWindow) {
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  }
  const auto win = gaussian_window();
  const size_t plane_size = static_cast<size_t>(a.height) * a.width;
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> pa(plane_size), pb(plane_size), paa(plane_size), pbb(plane_size),
        pab(plane_size);
    for (int y = 0; y < a.height; ++y) {
      for (int x = 0; x < a.width; ++x) {
        const size_t i = static_cast<size_t>(y) * a.width + x;
        const double va = a.at(y, x, c), vb = b.at(y, x, c);
        pa[i] = va;
        pb[i] = vb;
        paa[i] = va * va;
        pbb[i] = vb * vb;
        pab[i] = va * vb;
      }
    }
    int oh = 0, ow = 0;
    const auto mu_a = gaussian_valid(pa, a.height, a.width, win, oh, ow);
    const auto mu_b = gaussian_valid(pb, a.height, a.width, win, oh, ow);
    const auto m_aa = gaussian_valid(paa, a.height, a.width, win, oh, ow);
    const auto m_bb = gaussian_valid(pbb, a.height, a.width, win, oh, ow);
    const auto m_ab = gaussian_valid(pab, a.height, a.width, win, oh, ow);
    double channel_sum = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
      const double var_a = m_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = m_bb[i] - mu_b[i] * mu_b[i];
      const double cov = m_ab[i] - mu_a[i] * mu_b[i];
      channel_sum += ((2.0 * mu_a[i] * mu_b[i] + kC1) * (2.0 * cov + kC2)) /
                     ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + kC1) * (var_a + var_b + kC2));
    }
    total += channel_sum / static_cast<double>(mu_a.size());
  }
  return total / a.channels;
}

double spearman_rank_correlation(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman_rank_correlation: need >= 2 paired points");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::invalid_argument("spearman_rank_correlation: constant input");
  }
  return sxy / std::sqrt(sxx * syy);
}

const PipelineMetrics& EvalReport::find(const std::string& name) const {
  for (const auto& p : pipelines) {
    if (p.pipeline == name) return p;
  }
  throw std::out_of_range("EvalReport: no pipeline named " + name);
}

void EvalReport::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "eval.csv");
  csv << "pipeline,accuracy,auc,psnr,ssim\n";
  csv.precision(10);
  for (const auto& p : pipelines) {
    csv << p.pipeline << ',' << p.accuracy << ',' << p.auc << ',' << p.psnr << ',' << p.ssim
        << '\n';
  }
  json j;
  j["seed"] = seed;
  j["config_fingerprint"] = config_fingerprint;
  for (const auto& p : pipelines) {
    json row;
    row["pipeline"] = p.pipeline;
    row["accuracy"] = p.accuracy;
    row["auc"] = p.auc;
    row["psnr"] = p.psnr;
    row["ssim"] = p.ssim;
    row["per_class_accuracy"] = p.per_class_accuracy;
    j["pipelines"].push_back(row);
  }
  std::ofstream jf(dir / "eval.json");
  jf << j.dump(2) << "\n";
}

namespace {

torch::Tensor map_in_chunks(const std::function<torch::Tensor(const torch::Tensor&)>& fn,
                            const torch::Tensor& x, std::int64_t chunk = 64) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> parts;
  for (std::int64_t start = 0; start < x.size(0); start += chunk) {
    parts.push_back(fn(x.slice(0, start, std::min(x.size(0), start + chunk))));
  }
  return torch::cat(parts);
}

PipelineMetrics score_pipeline(const std::string& name, ClassifierNet& classifier,
                               const torch::Tensor& stream, const std::vector<int>& labels,
                               const std::vector<ImageTensor>& refs, int num_classes) {
  torch::NoGradGuard guard;
  PipelineMetrics m;
  m.pipeline = name;
  auto logits = map_in_chunks([&](const torch::Tensor& t) { return classifier->forward(t); },
                              stream);
  auto probs_t = torch::softmax(logits, 1).to(torch::kFloat64);
  std::vector<int> preds(labels.size());
  std::vector<std::vector<double>> probs(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    auto row = probs_t[static_cast<std::int64_t>(i)];
    probs[i].assign(row.data_ptr<double>(), row.data_ptr<double>() + row.numel());
    preds[i] = static_cast<int>(
        std::max_element(probs[i].begin(), probs[i].end()) - probs[i].begin());
  }
  m.accuracy = accuracy(preds, labels);
  m.auc = macro_ovr_auc(probs, labels, num_classes);

  std::vector<size_t> class_total(static_cast<size_t>(num_classes), 0);
  std::vector<size_t> class_hit(static_cast<size_t>(num_classes), 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    ++class_total[static_cast<size_t>(labels[i])];
    if (preds[i] == labels[i]) ++class_hit[static_cast<size_t>(labels[i])];
  }
  m.per_class_accuracy.resize(static_cast<size_t>(num_classes), 0.0);
  for (int c = 0; c < num_classes; ++c) {
    if (class_total[static_cast<size_t>(c)] > 0) {
      m.per_class_accuracy[static_cast<size_t>(c)] =
          static_cast<double>(class_hit[static_cast<size_t>(c)]) /
          static_cast<double>(class_total[static_cast<size_t>(c)]);
    }
  }

  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (size_t i = 0; i < refs.size(); ++i) {
    const ImageTensor img = from_tensor(stream[static_cast<std::int64_t>(i)]);
    psnr_sum += psnr(img, refs[i]);
    ssim_sum += ssim(img, refs[i]);
  }
  m.psnr = psnr_sum / static_cast<double>(refs.size());
  m.ssim = ssim_sum / static_cast<double>(refs.size());
  return m;
}

std::string fingerprint_config(const Config& config) {
  const std::string text = config.to_json_string();
  return to_hex(fnv1a64(text.data(), text.size()));
}

}  // namespace

EvalReport evaluate_pipelines(const Config& config, const std::filesystem::path& data_root,
                              const std::filesystem::path& models_dir,
                              const std::filesystem::path& vat_dir,
                              const std::string& restoration_name) {
  set_global_determinism(mix_seed(config.seed, "eval"));
  FrozenModels frozen = load_frozen_models(models_dir, restoration_name);

  const DatasetManifest manifest = load_manifest(data_root, "degraded_test");
  const RestorationPairs pairs = load_degraded_test_pairs(data_root);
  std::vector<int> labels;
  labels.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) labels.push_back(s.label);

  const auto x = to_batch(pairs.degraded);
  const auto i_r = map_in_chunks(
      [&](const torch::Tensor& t) { return frozen.restoration->forward(t); }, x);

  EvalReport report;
  report.seed = config.seed;
  report.config_fingerprint = fingerprint_config(config);
  report.pipelines.push_back(score_pipeline("degraded-direct", frozen.classifier, x, labels,
                                            pairs.clean, frozen.num_classes));
  report.pipelines.push_back(score_pipeline("restored-direct", frozen.classifier, i_r, labels,
                                            pairs.clean, frozen.num_classes));
  if (!vat_dir.empty()) {
    VatModules m = VatModules::open_a(vat_dir);
    torch::NoGradGuard guard;
    auto translated = map_in_chunks(
        [&](const torch::Tensor& t) {
          auto r = frozen.restoration->forward(t);
          return m.t_a->forward(fuse_views(m, t, r, config.train.use_gate));
        },
        x);
    report.pipelines.push_back(score_pipeline("vat-translated", frozen.classifier, translated,
                                              labels, pairs.clean, frozen.num_classes));
  }
  return report;
}

ImageTensor gate_heatmap(VatModules& m, const ImageTensor& i_lq, const ImageTensor& i_r) {
  torch::NoGradGuard guard;
  const auto lq = to_tensor(i_lq).unsqueeze(0);
  const auto r = to_tensor(i_r).unsqueeze(0);
  const auto weights = m.gate->gate_map(lq, r);          // sigma(w), per pixel/channel
  const auto fused = m.gate->forward(lq, r);
  const ImageTensor heat = colorize_heatmap(from_tensor(weights.mean(1)));
  return hconcat({i_lq, i_r, from_tensor(fused), heat});
}

namespace {

// Shared sweep/ablation runner: short training with overridden knobs, then
// the vat-translated accuracy on the test split.
double short_run_accuracy(const Config& config, const std::filesystem::path& data_root,
                          const std::filesystem::path& models_dir,
                          const std::filesystem::path& run_dir,
                          const std::string& restoration_name) {
  TrainHooks hooks;
  if (restoration_name != "restoration.pt") hooks.restoration_checkpoint = restoration_name;
  train_vat(config, data_root, models_dir, run_dir, hooks);
  EvalReport report =
      evaluate_pipelines(config, data_root, models_dir, run_dir, restoration_name);
  report.write(run_dir);
  return report.find("vat-translated").accuracy;
}

}  // namespace

SweepResult sweep_restoration_quality(const Config& config,
                                      const std::filesystem::path& data_root,
                                      const std::filesystem::path& models_dir,
                                      const std::filesystem::path& out_dir) {
  // Collect restoration_ep<N>.pt snapshots in epoch order.
  std::vector<std::pair<int, std::string>> snapshots;
  const std::regex pattern("restoration_ep([0-9]+)\\.pt");
  for (const auto& entry : std::filesystem::directory_iterator(models_dir)) {
    std::smatch match;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, match, pattern)) {
      snapshots.emplace_back(std::stoi(match[1]), name);
    }
  }
  std::sort(snapshots.begin(), snapshots.end());
  if (snapshots.size() < 3) {
    throw std::invalid_argument("sweep_restoration_quality: need >= 3 restoration snapshots");
  }

  // Validation PSNR per snapshot, required strictly increasing.
  const RestorationPairs val = load_restoration_pairs(data_root, "restoration_val");
  const auto x_val = to_batch(val.degraded);
  std::vector<double> snapshot_psnr;
  for (const auto& [epoch, name] : snapshots) {
    const json meta = json::parse(read_checkpoint_meta(models_dir / name));
    RestorationNet net(meta.at("extra").at("width").get<int>());
    load_checkpoint(*net, models_dir / name);
    net->eval();
    torch::NoGradGuard guard;
    const auto restored = net->forward(x_val);
    double sum = 0.0;
    for (size_t i = 0; i < val.clean.size(); ++i) {
      sum += psnr(from_tensor(restored[static_cast<std::int64_t>(i)]), val.clean[i]);
    }
    snapshot_psnr.push_back(sum / static_cast<double>(val.clean.size()));
  }
  for (size_t i = 1; i < snapshot_psnr.size(); ++i) {
    if (!(snapshot_psnr[i] > snapshot_psnr[i - 1])) {
      throw std::invalid_argument(
          "sweep_restoration_quality: snapshot validation PSNR must be strictly increasing");
    }
  }

  Config run_config = config;
  run_config.train.epochs = config.sweep.sweep_epochs;
  SweepResult result;
  std::vector<double> xs, ys;
  for (size_t i = 0; i < snapshots.size(); ++i) {
    const auto& [epoch, name] = snapshots[i];
    SweepRow row;
    row.name = "ep" + std::to_string(epoch);
    row.x = snapshot_psnr[i];
    row.accuracy = short_run_accuracy(run_config, data_root, models_dir,
                                      out_dir / row.name, name);
    xs.push_back(row.x);
    ys.push_back(row.accuracy);
    result.rows.push_back(row);
  }
  result.correlation = spearman_rank_correlation(xs, ys);

  std::filesystem::create_directories(out_dir);
  result.table_path = out_dir / "sweep_restoration.csv";
  std::ofstream csv(result.table_path);
  csv.precision(10);
  csv << "snapshot,restorer_psnr,accuracy\n";
  for (const auto& row : result.rows) {
    csv << row.name << ',' << row.x << ',' << row.accuracy << '\n';
  }
  csv << "# spearman," << result.correlation << '\n';

  result.plot_path = out_dir / "sweep_restoration.svg";
  plot::write_svg(result.plot_path, "Restoration quality vs downstream accuracy",
                  "restorer val PSNR (dB)", "vat-translated accuracy",
                  {{"accuracy", xs, ys}});
  return result;
}

SweepResult sweep_translator_size(const Config& config, const std::filesystem::path& data_root,
                                  const std::filesystem::path& models_dir,
                                  const std::filesystem::path& out_dir) {
  if (config.sweep.base_dims.empty()) {
    throw std::invalid_argument("sweep_translator_size: empty base_dims");
  }
  Config run_config = config;
  run_config.train.epochs = config.sweep.sweep_epochs;

  SweepResult result;
  std::vector<double> xs, ys;
  for (int dim : config.sweep.base_dims) {
    run_config.train.base_dim = dim;
    SweepRow row;
    row.name = "dim" + std::to_string(dim);
    row.x = static_cast<double>(parameter_count(*UShapeTranslator(dim)));
    row.accuracy = short_run_accuracy(run_config, data_root, models_dir, out_dir / row.name,
                                      "restoration.pt");
    xs.push_back(row.x);
    ys.push_back(row.accuracy);
    result.rows.push_back(row);
  }
  result.correlation = spearman_rank_correlation(xs, ys);

  std::filesystem::create_directories(out_dir);
  result.table_path = out_dir / "sweep_size.csv";
  std::ofstream csv(result.table_path);
  csv.precision(10);
  csv << "base_dim,translator_params,accuracy\n";
  for (size_t i = 0; i < result.rows.size(); ++i) {
    csv << config.sweep.base_dims[i] << ',' << result.rows[i].x << ','
        << result.rows[i].accuracy << '\n';
  }
  csv << "# spearman," << result.correlation << '\n';
  json echo;
  echo["base_dims"] = config.sweep.base_dims;
  echo["sweep_epochs"] = config.sweep.sweep_epochs;
  echo["config_fingerprint"] = fingerprint_config(config);
  std::ofstream jf(out_dir / "sweep_size.json");
  jf << echo.dump(2) << "\n";

  result.plot_path = out_dir / "sweep_size.svg";
  plot::write_svg(result.plot_path, "Translator size vs downstream accuracy",
                  "translator parameters", "vat-translated accuracy", {{"accuracy", xs, ys}});
  return result;
}

std::vector<AblationRow> ablation_grid(const Config& config,
                                       const std::filesystem::path& data_root,
                                       const std::filesystem::path& models_dir,
                                       const std::filesystem::path& out_dir) {
  std::vector<AblationRow> rows = {
      {"mle-only", 0.0, 1.0, false, "off", 0.0},
      {"cyc-only", 1.0, 0.0, false, "off", 0.0},
      {"cyc+mle", 1.0, 1.0, false, "off", 0.0},
      {"cyc+mle+gate", 1.0, 1.0, true, "off", 0.0},
      {"cyc+mle+gate+mixup", 1.0, 1.0, true, "plain", 0.0},
      {"full", 1.0, 1.0, true, "uncertainty", 0.0},
  };
  for (auto& row : rows) {
    Config run_config = config;
    run_config.train.weight_cyc = row.weight_cyc;
    run_config.train.weight_mle = row.weight_mle;
    run_config.train.use_gate = row.use_gate;
    run_config.train.mixup_mode = row.mixup_mode;
    row.accuracy = short_run_accuracy(run_config, data_root, models_dir, out_dir / row.name,
                                      "restoration.pt");
  }

  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir / "ablation.csv");
  csv.precision(10);
  csv << "row,weight_cyc,weight_mle,use_gate,mixup_mode,accuracy\n";
  json j;
  j["seed"] = config.seed;
  j["config_fingerprint"] = fingerprint_config(config);
  for (const auto& row : rows) {
    csv << row.name << ',' << row.weight_cyc << ',' << row.weight_mle << ','
        << (row.use_gate ? 1 : 0) << ',' << row.mixup_mode << ',' << row.accuracy << '\n';
    json r;
    r["row"] = row.name;
    r["accuracy"] = row.accuracy;
    j["rows"].push_back(r);
  }
  std::ofstream jf(out_dir / "ablation.json");
  jf << j.dump(2) << "\n";
  return rows;
}

}  // namespace vat
