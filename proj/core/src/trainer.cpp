#include "vat/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"
#include "vat/manifest.hpp"
#include "vat/rng.hpp"
#include "vat/synthdata.hpp"

namespace vat {

namespace {

// Soft-target cross entropy, mean over the batch.
torch::Tensor soft_cross_entropy(const torch::Tensor& logits, const torch::Tensor& targets) {
  return -(targets * torch::log_softmax(logits, 1)).sum(1).mean();
}

torch::Tensor forward_in_chunks(const std::function<torch::Tensor(const torch::Tensor&)>& fn,
                                const torch::Tensor& x, std::int64_t chunk) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> parts;
  for (std::int64_t start = 0; start < x.size(0); start += chunk) {
    parts.push_back(fn(x.slice(0, start, std::min(x.size(0), start + chunk))));
  }
  return torch::cat(parts);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

}  // namespace

void FrozenModels::freeze() {
  restoration->eval();
  classifier->eval();
  for (auto& p : restoration->parameters()) p.set_requires_grad(false);
  for (auto& p : classifier->parameters()) p.set_requires_grad(false);
}

FrozenModels load_frozen_models(const std::filesystem::path& models_dir,
                                const std::string& restoration_name) {
  for (const auto& name : {std::string("task.pt"), restoration_name, std::string("bank.pt")}) {
    if (!std::filesystem::exists(models_dir / name)) {
      throw std::runtime_error("missing checkpoint: " + (models_dir / name).string());
    }
  }
  FrozenModels f;
  {
    const json meta = json::parse(read_checkpoint_meta(models_dir / "task.pt"));
    const json& extra = meta.at("extra");
    f.num_classes = extra.at("num_classes").get<int>();
    f.classifier = ClassifierNet(extra.at("width").get<int>(), f.num_classes);
    load_checkpoint(*f.classifier, models_dir / "task.pt");
  }
  {
    const json meta = json::parse(read_checkpoint_meta(models_dir / restoration_name));
    f.restoration = RestorationNet(meta.at("extra").at("width").get<int>());
    load_checkpoint(*f.restoration, models_dir / restoration_name);
  }
  f.bank = ReferenceBank::load(models_dir / "bank.pt");
  if (f.bank.num_classes != f.num_classes) {
    throw std::runtime_error("load_frozen_models: bank/classifier class count mismatch");
  }
  f.freeze();
  return f;
}

torch::Tensor fuse_views(VatModules& m, const torch::Tensor& i_lq, const torch::Tensor& i_r,
                         bool use_gate) {
  if (i_lq.sizes() != i_r.sizes()) {
    throw std::invalid_argument("fuse_views: view shapes differ");
  }
  return use_gate ? m.gate->forward(i_lq, i_r) : i_r;
}

torch::Tensor vat_forward(RestorationNet& restoration, VatModules& m, const torch::Tensor& x,
                          bool use_gate) {
  torch::Tensor i_r;
  {
    torch::NoGradGuard guard;
    i_r = restoration->forward(x);
  }
  return m.t_a->forward(fuse_views(m, x, i_r, use_gate));
}

std::pair<torch::Tensor, torch::Tensor> cycle_terms(VatModules& m, const torch::Tensor& fused,
                                                    const torch::Tensor& i_hq) {
  auto cyc_forward = torch::l1_loss(m.t_b->forward(m.t_a->forward(fused)), fused);
  auto cyc_backward = torch::l1_loss(m.t_a->forward(m.t_b->forward(i_hq)), i_hq);
  return {cyc_forward, cyc_backward};
}

std::pair<torch::Tensor, torch::Tensor> cycle_loss(VatModules& m, const torch::Tensor& i_lq,
                                                   const torch::Tensor& i_r,
                                                   const torch::Tensor& i_hq, bool use_gate) {
  if (i_lq.sizes() != i_hq.sizes()) {
    throw std::invalid_argument("cycle_loss: stream shapes differ");
  }
  return cycle_terms(m, fuse_views(m, i_lq, i_r, use_gate), i_hq);
}

MixupResult mixup(VatModules& m, const torch::Tensor& i_lq, const torch::Tensor& i_r,
                  const torch::Tensor& i_hq, const PseudoLabel& y_lq, const SoftLabel& y_hq,
                  double lambda, bool use_gate) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw std::invalid_argument("mixup: lambda must be in [0,1]");
  }
  if (y_lq.label.kind != PredictionKind::classification) {
    throw std::invalid_argument("mixup: label arithmetic is classification-only");
  }
  const auto& p_lq = y_lq.label.soft.probs;
  const auto& p_hq = y_hq.probs;
  if (p_lq.size() != p_hq.size() || p_lq.empty()) {
    throw std::invalid_argument("mixup: label size mismatch");
  }

  auto normalized = [](const std::vector<double>& p) {
    double sum = 0.0;
    for (double v : p) sum += v;
    SoftLabel out;
    out.probs.resize(p.size());
    for (size_t i = 0; i < p.size(); ++i) out.probs[i] = p[i] / sum;
    return out;
  };

  MixupResult result;
  // Exact corners: the pure image and the pure (renormalized) label.
  if (lambda == 0.0) {
    result.i_mix = i_hq.clone();
    result.y_mix = normalized(p_hq);
    return result;
  }
  const torch::Tensor fused =
      fuse_views(m, i_lq.unsqueeze(0), i_r.unsqueeze(0), use_gate).squeeze(0);
  if (lambda == 1.0) {
    result.i_mix = fused;
    result.y_mix = normalized(p_lq);
    return result;
  }

  result.i_mix = lambda * fused + (1.0 - lambda) * i_hq;
  const double c_lq = std::clamp(1.0 - y_lq.uncertainty, 0.0, 1.0);
  const double c_hq = std::clamp(y_hq.weight, 0.0, 1.0);
  std::vector<double> raw(p_lq.size());
  double sum = 0.0;
  for (size_t i = 0; i < raw.size(); ++i) {
    raw[i] = c_lq * lambda * p_lq[i] + c_hq * (1.0 - lambda) * p_hq[i];
    sum += raw[i];
  }
  if (sum <= 0.0) {
    result.skipped = true;
    return result;
  }
  result.y_mix = normalized(raw);
  return result;
}

std::pair<torch::Tensor, torch::Tensor> mle_loss(ClassifierNet& classifier, VatModules& m,
                                                 const torch::Tensor& i_hq,
                                                 const torch::Tensor& i_r_hq,
                                                 const torch::Tensor& y_hq,
                                                 const torch::Tensor& i_mix,
                                                 const torch::Tensor& y_mix, bool use_gate) {
  auto translated_clean = m.t_a->forward(fuse_views(m, i_hq, i_r_hq, use_gate));
  auto mle_clean = soft_cross_entropy(classifier->forward(translated_clean), y_hq);
  torch::Tensor mle_mix;
  if (i_mix.defined() && i_mix.size(0) > 0) {
    mle_mix = soft_cross_entropy(classifier->forward(m.t_a->forward(i_mix)), y_mix);
  } else {
    mle_mix = torch::zeros({}, mle_clean.options());
  }
  return {mle_clean, mle_mix};
}

LossBreakdown LossTensors::detach() const {
  LossBreakdown b;
  b.cyc_forward = cyc_forward.item<double>();
  b.cyc_backward = cyc_backward.item<double>();
  b.mle_clean = mle_clean.item<double>();
  b.mle_mix = mle_mix.item<double>();
  b.total = total.item<double>();
  return b;
}

LossTensors assemble_losses(ClassifierNet& classifier, VatModules& m, const IterationBatch& batch,
                            const TrainConfig& config) {
  LossTensors out;
  const torch::Tensor fused = fuse_views(m, batch.x_lq, batch.i_r, config.use_gate);
  std::tie(out.cyc_forward, out.cyc_backward) = cycle_terms(m, fused, batch.x_hq);

  torch::Tensor i_mix;
  if (batch.mix_idx.defined() && batch.mix_idx.numel() > 0) {
    auto lam = batch.mix_lambda.to(fused.dtype()).view({-1, 1, 1, 1});
    i_mix = lam * fused.index_select(0, batch.mix_idx) +
            (1.0 - lam) * batch.x_hq.index_select(0, batch.mix_idx);
  }
  std::tie(out.mle_clean, out.mle_mix) = mle_loss(classifier, m, batch.x_hq, batch.i_r_hq,
                                                  batch.y_hq, i_mix, batch.y_mix, config.use_gate);
  out.total = config.weight_cyc * (out.cyc_forward + out.cyc_backward) +
              config.weight_mle * (out.mle_clean + out.mle_mix);
  return out;
}

TrainResult train_vat(const Config& config, const std::filesystem::path& data_root,
                      const std::filesystem::path& models_dir,
                      const std::filesystem::path& out_dir, const TrainHooks& hooks) {
  const TrainConfig& tc = config.train;
  tc.validate();
  set_global_determinism(mix_seed(config.seed, "train"));
  std::filesystem::create_directories(out_dir);

  FrozenModels frozen = load_frozen_models(
      models_dir,
      hooks.restoration_checkpoint.empty() ? "restoration.pt" : hooks.restoration_checkpoint);
  const LoadedDataset degraded = load_split(data_root, "degraded_train");
  const LoadedDataset clean = load_split(data_root, "clean_train");
  const LoadedDataset val =
      tc.val_images > 0 ? load_split(data_root, "degraded_test", tc.val_images) : LoadedDataset{};

  const auto x_deg_all = to_batch(degraded.images);
  const auto x_clean_all = to_batch(clean.images);
  auto restore = [&](const torch::Tensor& t) { return frozen.restoration->forward(t); };
  const auto i_r_all = forward_in_chunks(restore, x_deg_all, 64);
  const auto i_r_clean_all = forward_in_chunks(restore, x_clean_all, 64);

  TrainResult result;
  result.out_dir = out_dir;
  result.frozen_r_checksum_before = parameter_checksum(*frozen.restoration);
  result.frozen_d_checksum_before = parameter_checksum(*frozen.classifier);

  torch::manual_seed(mix_seed(config.seed, "vat-init"));
  VatModules m = VatModules::make(tc);
  torch::optim::AdamW opt(m.parameters(), torch::optim::AdamWOptions(tc.learning_rate));

  auto rng_deg = make_rng(config.seed, "order-degraded");
  auto rng_clean = make_rng(config.seed, "order-clean");
  auto rng_lambda = make_rng(config.seed, "mixup-lambda");

  std::ofstream history(out_dir / "history.csv");
  if (!history) {
    throw std::runtime_error("train_vat: cannot write history.csv under " + out_dir.string());
  }
  history << "iteration,cyc_forward,cyc_backward,mle_clean,mle_mix,total\n";

  const size_t n_deg = degraded.images.size();
  const size_t n_clean = clean.images.size();
  const size_t batch = static_cast<size_t>(tc.batch_size);
  size_t clean_pos = 0;
  std::vector<std::size_t> clean_order = shuffled_indices(n_clean, rng_clean);
  int iteration = 0;
  bool stop = false;

  for (int epoch = 1; epoch <= tc.epochs && !stop; ++epoch) {
    const auto deg_order = shuffled_indices(n_deg, rng_deg);
    // Keep full batches only so every iteration sees the configured size.
    for (size_t start = 0; start + batch <= n_deg && !stop; start += batch) {
      std::vector<std::int64_t> deg_idx(batch), clean_idx(batch);
      for (size_t j = 0; j < batch; ++j) {
        deg_idx[j] = static_cast<std::int64_t>(deg_order[start + j]);
        clean_idx[j] = static_cast<std::int64_t>(clean_order[clean_pos]);
        if (++clean_pos == n_clean) {
          clean_order = shuffled_indices(n_clean, rng_clean);
          clean_pos = 0;
        }
      }

      IterationBatch ib;
      {
        torch::NoGradGuard guard;
        auto deg_t = torch::tensor(deg_idx);
        auto clean_t = torch::tensor(clean_idx);
        ib.x_lq = x_deg_all.index_select(0, deg_t);
        ib.i_r = i_r_all.index_select(0, deg_t);
        ib.x_hq = x_clean_all.index_select(0, clean_t);
        ib.i_r_hq = i_r_clean_all.index_select(0, clean_t);
      }

      // Frozen-model labels for both streams (Algorithm lines: clean labels,
      // degraded pseudo-labels, uncertainty filter).
      auto y_hq_labels = clean_labels(frozen.classifier, ib.x_hq, frozen.bank);
      auto pseudo = degraded_pseudo_labels(frozen.classifier, ib.x_lq, ib.i_r, frozen.bank);
      for (size_t j = 0; j < pseudo.size(); ++j) {
        pseudo[j].sample_id = degraded.records[static_cast<size_t>(deg_idx[j])].id;
      }
      pseudo = filter_by_uncertainty(std::move(pseudo), tc.epsilon);

      const int num_classes = frozen.num_classes;
      auto targets = torch::zeros({static_cast<std::int64_t>(batch), num_classes});
      for (size_t j = 0; j < batch; ++j) {
        for (int c = 0; c < num_classes; ++c) {
          targets[static_cast<std::int64_t>(j)][c] =
              static_cast<float>(y_hq_labels[j].label.soft.probs[static_cast<size_t>(c)]);
        }
      }
      ib.y_hq = targets;

      if (tc.mixup_mode != "off") {
        std::vector<std::int64_t> mix_idx;
        std::vector<double> mix_lambda;
        std::vector<std::vector<double>> mix_targets;
        for (size_t j = 0; j < batch; ++j) {
          if (!pseudo[j].kept) continue;
          const double lambda =
              hooks.forced_lambda ? *hooks.forced_lambda : sample_beta(rng_lambda, tc.alpha);
          const bool plain = tc.mixup_mode == "plain";
          const double c_lq = plain ? 1.0 : std::clamp(1.0 - pseudo[j].uncertainty, 0.0, 1.0);
          const double c_hq = plain ? 1.0 : std::clamp(1.0 - y_hq_labels[j].uncertainty, 0.0, 1.0);
          const auto& p_lq = pseudo[j].label.soft.probs;
          const auto& p_hq = y_hq_labels[j].label.soft.probs;
          std::vector<double> raw(p_lq.size());
          double sum = 0.0;
          for (size_t c = 0; c < raw.size(); ++c) {
            raw[c] = c_lq * lambda * p_lq[c] + c_hq * (1.0 - lambda) * p_hq[c];
            sum += raw[c];
          }
          if (sum <= 0.0) continue;  // both views uncertain: skip the sample
          for (double& v : raw) v /= sum;
          mix_idx.push_back(static_cast<std::int64_t>(j));
          mix_lambda.push_back(lambda);
          mix_targets.push_back(std::move(raw));
        }
        if (!mix_idx.empty()) {
          ib.mix_idx = torch::tensor(mix_idx);
          ib.mix_lambda = torch::tensor(mix_lambda, torch::kFloat64);
          auto y_mix = torch::zeros({static_cast<std::int64_t>(mix_idx.size()), num_classes});
          for (size_t j = 0; j < mix_targets.size(); ++j) {
            for (int c = 0; c < num_classes; ++c) {
              y_mix[static_cast<std::int64_t>(j)][c] =
                  static_cast<float>(mix_targets[j][static_cast<size_t>(c)]);
            }
          }
          ib.y_mix = y_mix;
        }
      }

      LossTensors losses = assemble_losses(frozen.classifier, m, ib, tc);
      const LossBreakdown b = losses.detach();
      if (!std::isfinite(b.total)) {
        std::ostringstream os;
        os << "train_vat: non-finite loss at iteration " << iteration << " (cyc_forward="
           << b.cyc_forward << ", cyc_backward=" << b.cyc_backward << ", mle_clean="
           << b.mle_clean << ", mle_mix=" << b.mle_mix << ")";
        throw std::runtime_error(os.str());
      }

      opt.zero_grad();
      losses.total.backward();
      opt.step();

      history << iteration << ',' << format_double(b.cyc_forward) << ','
              << format_double(b.cyc_backward) << ',' << format_double(b.mle_clean) << ','
              << format_double(b.mle_mix) << ',' << format_double(b.total) << '\n';
      result.history.push_back(b);
      if (!hooks.dump_pseudo.empty()) {
        dump_pseudo_labels(hooks.dump_pseudo, epoch, pseudo);
      }
      if (hooks.on_iteration) hooks.on_iteration(iteration, b);
      ++iteration;
      if (hooks.max_iterations > 0 && iteration >= hooks.max_iterations) stop = true;
    }

    if (!val.images.empty()) {
      torch::NoGradGuard guard;
      const auto x_val = to_batch(val.images);
      auto logits = frozen.classifier->forward(
          m.t_a->forward(fuse_views(m, x_val, forward_in_chunks(restore, x_val, 64), tc.use_gate)));
      auto pred = logits.argmax(1);
      std::int64_t hits = 0;
      for (size_t j = 0; j < val.labels.size(); ++j) {
        if (pred[static_cast<std::int64_t>(j)].item<std::int64_t>() == val.labels[j]) ++hits;
      }
      result.val_accuracy.push_back(static_cast<double>(hits) /
                                    static_cast<double>(val.labels.size()));
    }
    if (tc.checkpoint_every > 0 && epoch % tc.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d", epoch);
      m.save_a(out_dir / name);
    }
  }

  m.save_a(out_dir);
  result.iterations = iteration;
  result.frozen_r_checksum_after = parameter_checksum(*frozen.restoration);
  result.frozen_d_checksum_after = parameter_checksum(*frozen.classifier);

  json run;
  run["config"] = json::parse(config.to_json_string());
  run["seed"] = config.seed;
  for (const char* split : {"clean_train", "degraded_train", "degraded_test"}) {
    const auto mf = data_root / split / "manifest.jsonl";
    run["dataset_fingerprints"][split] = to_hex(fingerprint_file(mf));
  }
  run["metrics"]["iterations"] = iteration;
  if (!result.val_accuracy.empty()) {
    run["metrics"]["final_val_accuracy"] = result.val_accuracy.back();
  }
  run["metrics"]["frozen_restoration_checksum"] = result.frozen_r_checksum_after;
  run["metrics"]["frozen_classifier_checksum"] = result.frozen_d_checksum_after;
  if (result.history.size() >= 100) {
    auto mean_total = [&](size_t from, size_t count) {
      double s = 0.0;
      for (size_t i = from; i < from + count; ++i) s += result.history[i].total;
      return s / static_cast<double>(count);
    };
    run["metrics"]["first50_mean_total"] = mean_total(0, 50);
    run["metrics"]["last50_mean_total"] = mean_total(result.history.size() - 50, 50);
  }
  std::ofstream run_out(out_dir / "run.json");
  run_out << run.dump(2) << "\n";
  return result;
}

}  // namespace vat
