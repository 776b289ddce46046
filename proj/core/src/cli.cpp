#include "vat/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include "json_util.hpp"
#include "vat/config.hpp"
#include "vat/eval.hpp"
#include "vat/manifest.hpp"
#include "vat/nets.hpp"
#include "vat/oracle.hpp"
#include "vat/rng.hpp"
#include "vat/synthdata.hpp"
#include "vat/trainer.hpp"
#include "vat/uncertainty.hpp"

namespace vat::cli {

namespace {

namespace fs = std::filesystem;

struct CommonOptions {
  std::string config_path;
  std::uint64_t seed = 0;
  std::string data_root;
  std::string models_dir;
  std::string out_dir;
  bool deterministic = true;
};

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Config make_config(CLI::App* sub, const CommonOptions& o) {
  Config c = o.config_path.empty() ? Config::defaults() : Config::load(o.config_path);
  if (sub->count("--seed") > 0) c.seed = o.seed;
  return c;
}

fs::path resolve_data_root(const CommonOptions& o) {
  if (!o.data_root.empty()) return o.data_root;
  if (const char* env = std::getenv("VAT_DATA_ROOT")) return env;
  throw std::runtime_error("missing data root: pass --data or set VAT_DATA_ROOT");
}

void seed_torch(const Config& c, const CommonOptions& o, const char* tag) {
  if (o.deterministic) {
    set_global_determinism(mix_seed(c.seed, tag));
  } else {
    torch::manual_seed(mix_seed(c.seed, tag));
  }
}

void add_fingerprint(std::map<std::string, std::string>& m, const std::string& key,
                     const fs::path& path) {
  if (fs::exists(path)) m[key] = to_hex(fingerprint_file(path));
}

void add_dataset_fingerprints(std::map<std::string, std::string>& m, const fs::path& root) {
  for (const char* split : {"clean_train", "clean_test", "degraded_train", "degraded_test",
                            "degraded_test_ref", "restoration_pretrain", "restoration_val"}) {
    add_fingerprint(m, std::string("dataset/") + split, root / split / "manifest.jsonl");
  }
}

RunManifest base_manifest(const std::string& command, const Config& config,
                          const CommonOptions& o) {
  RunManifest m;
  m.command = command;
  m.config_snapshot = config.to_json_string();
  m.seed = config.seed;
  m.notes["deterministic"] = o.deterministic ? "true" : "false";
  return m;
}

// --- subcommand bodies ------------------------------------------------------

void run_gen_data(CLI::App* sub, const CommonOptions& o) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path out = o.out_dir.empty() ? resolve_data_root(o) : fs::path(o.out_dir);
  const auto manifests = build_datasets(config.data, config.seed, out);

  RunManifest m = base_manifest("gen-data", config, o);
  for (const auto& [split, dm] : manifests) {
    m.output_paths.push_back((out / split).string());
    m.notes["count/" + split] = std::to_string(dm.samples.size());
  }
  m.wall_clock_seconds = timer.seconds();
  m.write(out);
  std::cout << "generated " << manifests.size() << " splits under " << out.string() << "\n";
}

void run_pretrain(CLI::App* sub, const CommonOptions& o) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path data = resolve_data_root(o);
  const fs::path out = o.out_dir;
  if (out.empty()) throw std::runtime_error("pretrain: --out is required");
  seed_torch(config, o, "pretrain");
  fs::create_directories(out);

  const auto task = pretrain_task_model(data, config.pretrain, config.data.num_classes,
                                        config.seed, out);
  const auto restoration = pretrain_restoration_model(data, config.pretrain, config.seed, out);

  // Reference bank: the classifier's embeddings of the clean training stream.
  const LoadedDataset clean = load_split(data, "clean_train");
  FrozenModels frozen;  // only the classifier is needed here
  {
    const json meta = json::parse(read_checkpoint_meta(out / "task.pt"));
    frozen.classifier =
        ClassifierNet(meta.at("extra").at("width").get<int>(), config.data.num_classes);
    load_checkpoint(*frozen.classifier, out / "task.pt");
    frozen.classifier->eval();
  }
  torch::Tensor embeddings;
  {
    torch::NoGradGuard guard;
    const auto x = to_batch(clean.images);
    std::vector<torch::Tensor> parts;
    for (std::int64_t start = 0; start < x.size(0); start += 64) {
      parts.push_back(frozen.classifier->embed(x.slice(0, start, std::min(x.size(0), start + 64))));
    }
    embeddings = torch::cat(parts);
  }
  const ReferenceBank bank = build_reference_bank(embeddings, clean.labels,
                                                  config.data.num_classes, config.uncertainty,
                                                  config.seed);
  bank.save(out / "bank.pt");

  RunManifest m = base_manifest("pretrain", config, o);
  add_dataset_fingerprints(m.input_fingerprints, data);
  m.output_paths = {(out / "task.pt").string(), (out / "restoration.pt").string(),
                    (out / "bank.pt").string()};
  for (const auto& p : restoration.checkpoints) m.output_paths.push_back(p.string());
  m.notes["clean_test_accuracy"] = std::to_string(task.clean_test_accuracy);
  for (size_t i = 0; i < restoration.snapshot_epochs.size(); ++i) {
    m.notes["restoration_psnr/ep" + std::to_string(restoration.snapshot_epochs[i])] =
        std::to_string(restoration.val_psnr[i]);
  }
  m.notes["bank_size"] = std::to_string(bank.size());
  m.wall_clock_seconds = timer.seconds();
  m.write(out);
  std::cout << "pretrained stubs: clean_test_accuracy=" << task.clean_test_accuracy
            << ", restoration snapshots=" << restoration.snapshot_epochs.size() << "\n";
}

void run_train(CLI::App* sub, const CommonOptions& o, const std::string& dump_pseudo) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path data = resolve_data_root(o);
  const fs::path models = o.models_dir;
  const fs::path out = o.out_dir;
  if (models.empty() || out.empty()) {
    throw std::runtime_error("train: --models and --out are required");
  }
  seed_torch(config, o, "train-cli");

  TrainHooks hooks;
  if (!dump_pseudo.empty()) hooks.dump_pseudo = dump_pseudo;
  const TrainResult result = train_vat(config, data, models, out, hooks);

  RunManifest m = base_manifest("train", config, o);
  add_dataset_fingerprints(m.input_fingerprints, data);
  add_fingerprint(m.input_fingerprints, "checkpoint/task", models / "task.pt");
  add_fingerprint(m.input_fingerprints, "checkpoint/restoration", models / "restoration.pt");
  add_fingerprint(m.input_fingerprints, "checkpoint/bank", models / "bank.pt");
  m.output_paths = {(out / "history.csv").string(), (out / "gate.pt").string(),
                    (out / "t_a.pt").string(), (out / "run.json").string()};
  m.notes["iterations"] = std::to_string(result.iterations);
  if (!result.val_accuracy.empty()) {
    m.notes["final_val_accuracy"] = std::to_string(result.val_accuracy.back());
  }
  m.wall_clock_seconds = timer.seconds();
  m.write(out);
  std::cout << "trained " << result.iterations << " iterations";
  if (!result.val_accuracy.empty()) std::cout << ", val_accuracy=" << result.val_accuracy.back();
  std::cout << "\n";
}

void run_eval(CLI::App* sub, const CommonOptions& o, const std::string& vat_dir) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path data = resolve_data_root(o);
  const fs::path models = o.models_dir;
  const fs::path out = o.out_dir;
  if (models.empty() || out.empty()) {
    throw std::runtime_error("eval: --models and --out are required");
  }

  const EvalReport report = evaluate_pipelines(config, data, models, vat_dir);
  report.write(out);

  RunManifest m = base_manifest("eval", config, o);
  add_dataset_fingerprints(m.input_fingerprints, data);
  add_fingerprint(m.input_fingerprints, "checkpoint/task", models / "task.pt");
  add_fingerprint(m.input_fingerprints, "checkpoint/restoration", models / "restoration.pt");
  m.output_paths = {(out / "eval.csv").string(), (out / "eval.json").string()};

  if (!vat_dir.empty()) {
    add_fingerprint(m.input_fingerprints, "checkpoint/t_a", fs::path(vat_dir) / "t_a.pt");
    add_fingerprint(m.input_fingerprints, "checkpoint/gate", fs::path(vat_dir) / "gate.pt");
    // Fusion diagnostic on the first test image.
    const LoadedDataset sample = load_split(data, "degraded_test", 1);
    FrozenModels frozen = load_frozen_models(models);
    VatModules bridge = VatModules::open_a(vat_dir);
    torch::NoGradGuard guard;
    const auto x = to_tensor(sample.images[0]).unsqueeze(0);
    const ImageTensor restored = from_tensor(frozen.restoration->forward(x));
    const ImageTensor panel = gate_heatmap(bridge, sample.images[0], restored);
    save_png(panel, out / "gate_heatmap.png");
    m.output_paths.push_back((out / "gate_heatmap.png").string());
  }
  m.wall_clock_seconds = timer.seconds();
  m.write(out);
  for (const auto& p : report.pipelines) {
    std::cout << p.pipeline << ": accuracy=" << p.accuracy << " auc=" << p.auc
              << " psnr=" << p.psnr << " ssim=" << p.ssim << "\n";
  }
}

void run_translate(CLI::App* sub, const CommonOptions& o, const std::vector<std::string>& inputs,
                   const std::string& vat_dir, bool panel) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path models = o.models_dir;
  const fs::path out = o.out_dir;
  if (models.empty() || out.empty() || vat_dir.empty()) {
    throw std::runtime_error("translate: --models, --vat and --out are required");
  }
  seed_torch(config, o, "translate");
  fs::create_directories(out);

  FrozenModels frozen = load_frozen_models(models);
  VatModules bridge = VatModules::open_a(vat_dir);

  RunManifest m = base_manifest("translate", config, o);
  add_fingerprint(m.input_fingerprints, "checkpoint/t_a", fs::path(vat_dir) / "t_a.pt");
  add_fingerprint(m.input_fingerprints, "checkpoint/gate", fs::path(vat_dir) / "gate.pt");
  add_fingerprint(m.input_fingerprints, "checkpoint/restoration", models / "restoration.pt");

  namespace F = torch::nn::functional;
  torch::NoGradGuard guard;
  for (const auto& input : inputs) {
    const ImageTensor img = load_png(input);
    auto x = to_tensor(img).unsqueeze(0);
    // The U-shape needs spatial sizes divisible by 4: replicate-pad, then crop.
    const std::int64_t pad_h = (4 - x.size(2) % 4) % 4;
    const std::int64_t pad_w = (4 - x.size(3) % 4) % 4;
    if (pad_h > 0 || pad_w > 0) {
      x = F::pad(x, F::PadFuncOptions({0, pad_w, 0, pad_h}).mode(torch::kReplicate));
      m.notes["pad/" + fs::path(input).filename().string()] =
          std::to_string(pad_h) + "x" + std::to_string(pad_w);
    }
    const auto restored = frozen.restoration->forward(x);
    auto translated = bridge.t_a->forward(fuse_views(bridge, x, restored, config.train.use_gate));
    translated = translated.slice(2, 0, img.height).slice(3, 0, img.width);

    const std::string stem = fs::path(input).stem().string();
    const fs::path out_file = out / (stem + "_translated.png");
    save_png(from_tensor(translated), out_file);
    m.output_paths.push_back(out_file.string());
    if (panel) {
      const auto restored_crop = restored.slice(2, 0, img.height).slice(3, 0, img.width);
      const ImageTensor strip =
          hconcat({img, from_tensor(restored_crop), from_tensor(translated)});
      const fs::path panel_file = out / (stem + "_panel.png");
      save_png(strip, panel_file);
      m.output_paths.push_back(panel_file.string());
    }
  }
  m.wall_clock_seconds = timer.seconds();
  m.write(out);
  std::cout << "translated " << inputs.size() << " image(s) into " << out.string() << "\n";
}

void run_oracle_check(CLI::App* sub, const CommonOptions& o, int trials, int x_size, int y_size) {
  Timer timer;
  const Config config = make_config(sub, o);
  const auto report = oracle::verify_decomposition(trials, x_size, y_size, config.seed);
  const bool passed = report.max_residual < 1e-9 && report.resolved_sign != 0;

  json j;
  j["command"] = "oracle-check";
  j["trials"] = report.trials;
  j["x_size"] = x_size;
  j["y_size"] = y_size;
  j["max_residual"] = report.max_residual;
  j["resolved_sign"] = report.resolved_sign;
  j["elapsed_seconds"] = timer.seconds();
  j["passed"] = passed;
  std::cout << j.dump() << "\n";

  if (!o.out_dir.empty()) {
    fs::create_directories(o.out_dir);
    std::ofstream out(fs::path(o.out_dir) / "oracle_check.json");
    out << j.dump(2) << "\n";
    RunManifest m = base_manifest("oracle-check", config, o);
    m.output_paths = {(fs::path(o.out_dir) / "oracle_check.json").string()};
    m.wall_clock_seconds = timer.seconds();
    m.write(o.out_dir);
  }
  if (!passed) {
    throw std::runtime_error("oracle-check failed: max_residual=" +
                             std::to_string(report.max_residual));
  }
}

void run_sweep_restoration(CLI::App* sub, const CommonOptions& o) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path data = resolve_data_root(o);
  if (o.models_dir.empty() || o.out_dir.empty()) {
    throw std::runtime_error("sweep-restoration: --models and --out are required");
  }
  const SweepResult result = sweep_restoration_quality(config, data, o.models_dir, o.out_dir);

  RunManifest m = base_manifest("sweep-restoration", config, o);
  add_dataset_fingerprints(m.input_fingerprints, data);
  m.output_paths = {result.table_path.string(), result.plot_path.string()};
  m.notes["spearman"] = std::to_string(result.correlation);
  m.wall_clock_seconds = timer.seconds();
  m.write(o.out_dir);
  std::cout << "restoration sweep: spearman=" << result.correlation << " over "
            << result.rows.size() << " snapshots\n";
}

void run_sweep_size(CLI::App* sub, const CommonOptions& o) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path data = resolve_data_root(o);
  if (o.models_dir.empty() || o.out_dir.empty()) {
    throw std::runtime_error("sweep-size: --models and --out are required");
  }
  const SweepResult result = sweep_translator_size(config, data, o.models_dir, o.out_dir);

  RunManifest m = base_manifest("sweep-size", config, o);
  add_dataset_fingerprints(m.input_fingerprints, data);
  m.output_paths = {result.table_path.string(), result.plot_path.string()};
  m.notes["spearman"] = std::to_string(result.correlation);
  m.wall_clock_seconds = timer.seconds();
  m.write(o.out_dir);
  std::cout << "size sweep: spearman=" << result.correlation << " over " << result.rows.size()
            << " widths\n";
}

void run_ablate(CLI::App* sub, const CommonOptions& o) {
  Timer timer;
  const Config config = make_config(sub, o);
  const fs::path data = resolve_data_root(o);
  if (o.models_dir.empty() || o.out_dir.empty()) {
    throw std::runtime_error("ablate: --models and --out are required");
  }
  const auto rows = ablation_grid(config, data, o.models_dir, o.out_dir);

  RunManifest m = base_manifest("ablate", config, o);
  add_dataset_fingerprints(m.input_fingerprints, data);
  m.output_paths = {(fs::path(o.out_dir) / "ablation.csv").string(),
                    (fs::path(o.out_dir) / "ablation.json").string()};
  for (const auto& row : rows) {
    m.notes["accuracy/" + row.name] = std::to_string(row.accuracy);
  }
  m.wall_clock_seconds = timer.seconds();
  m.write(o.out_dir);
  for (const auto& row : rows) {
    std::cout << row.name << ": accuracy=" << row.accuracy << "\n";
  }
}

}  // namespace

int dispatch(int argc, char** argv) {
  CLI::App app{"variational translator: unsupervised bridge between a frozen restorer and a "
               "frozen task model"};
  app.require_subcommand(1);

  CommonOptions o;
  std::string dump_pseudo, vat_dir;
  std::vector<std::string> inputs;
  bool panel = false;
  int trials = 100, x_size = 8, y_size = 8;

  auto add_common = [&](CLI::App* sub, bool with_data) {
    sub->add_option("--config", o.config_path, "JSON config file (defaults when omitted)");
    sub->add_option("--seed", o.seed, "master seed (overrides the config file)");
    sub->add_option("--out", o.out_dir, "output directory");
    sub->add_flag("--deterministic,!--no-deterministic", o.deterministic,
                  "single-threaded, seed-pinned execution (default on)");
    if (with_data) {
      sub->add_option("--data", o.data_root, "dataset root (default $VAT_DATA_ROOT)");
    }
    return sub;
  };

  auto* gen = add_common(app.add_subcommand("gen-data", "synthesize the desk-scale corpus"), true);
  gen->callback([&] { run_gen_data(gen, o); });

  auto* pre = add_common(app.add_subcommand("pretrain", "train the frozen restorer/classifier "
                                                        "stubs and the uncertainty bank"), true);
  pre->callback([&] { run_pretrain(pre, o); });

  auto* train = add_common(app.add_subcommand("train", "run the self-training loop"), true);
  train->add_option("--models", o.models_dir, "pretrained stub directory")->required();
  train->add_option("--dump-pseudo", dump_pseudo, "append per-sample pseudo-label JSONL here");
  train->callback([&] { run_train(train, o, dump_pseudo); });

  auto* ev = add_common(app.add_subcommand("eval", "score the three inference pipelines"), true);
  ev->add_option("--models", o.models_dir, "pretrained stub directory")->required();
  ev->add_option("--vat", vat_dir, "trained bridge checkpoint directory (optional)");
  ev->callback([&] { run_eval(ev, o, vat_dir); });

  auto* tr = add_common(app.add_subcommand("translate", "run the bridge on image files"), false);
  tr->add_option("--models", o.models_dir, "pretrained stub directory")->required();
  tr->add_option("--vat", vat_dir, "trained bridge checkpoint directory")->required();
  tr->add_option("inputs", inputs, "input PNG files")->required()->expected(-1);
  tr->add_flag("--panel", panel, "also write degraded|restored|translated strips");
  tr->callback([&] { run_translate(tr, o, inputs, vat_dir, panel); });

  auto* oc = add_common(app.add_subcommand("oracle-check", "verify the variational decomposition "
                                                           "on random discrete instances"), false);
  oc->add_option("--trials", trials, "number of random instances");
  oc->add_option("--x-size", x_size, "joint X dimension");
  oc->add_option("--y-size", y_size, "joint Y dimension");
  oc->callback([&] { run_oracle_check(oc, o, trials, x_size, y_size); });

  auto* sr = add_common(app.add_subcommand("sweep-restoration", "downstream accuracy vs restorer "
                                                                "quality"), true);
  sr->add_option("--models", o.models_dir, "pretrained stub directory")->required();
  sr->callback([&] { run_sweep_restoration(sr, o); });

  auto* ss = add_common(app.add_subcommand("sweep-size", "downstream accuracy vs translator "
                                                         "width"), true);
  ss->add_option("--models", o.models_dir, "pretrained stub directory")->required();
  ss->callback([&] { run_sweep_size(ss, o); });

  auto* ab = add_common(app.add_subcommand("ablate", "component ablation grid"), true);
  ab->add_option("--models", o.models_dir, "pretrained stub directory")->required();
  ab->callback([&] { run_ablate(ab, o); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    json err;
    err["error"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vat::cli
