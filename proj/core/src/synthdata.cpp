#include "vat/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json_util.hpp"
#include "vat/rng.hpp"

namespace vat {

DepthMode parse_depth_mode(const std::string& s) {
  if (s == "constant") return DepthMode::constant;
  if (s == "radial") return DepthMode::radial;
  throw std::invalid_argument("depth_mode must be constant|radial, got " + s);
}

ImageTensor degrade_lowlight(const ImageTensor& img, double gamma) {
  if (gamma <= 0.0) {
    throw std::invalid_argument("degrade_lowlight: gamma must be > 0");
  }
  ImageTensor out = img;
  for (float& v : out.values) {
    v = static_cast<float>(std::pow(static_cast<double>(clamp01(v)), gamma));
  }
  return out;
}

ImageTensor degrade_haze(const ImageTensor& img, double beta, double airlight, DepthMode depth) {
  if (beta < 0.0) {
    throw std::invalid_argument("degrade_haze: beta must be >= 0");
  }
  if (!(airlight >= 0.0 && airlight <= 1.0)) {
    throw std::invalid_argument("degrade_haze: airlight must be in [0,1]");
  }
  ImageTensor out = img;
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double max_dist = std::sqrt(cx * cx + cy * cy);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      double d = 1.0;
      if (depth == DepthMode::radial && max_dist > 0.0) {
        const double dx = x - cx;
        const double dy = y - cy;
        d = std::sqrt(dx * dx + dy * dy) / max_dist;
      }
      const double t = std::exp(-beta * d);
      for (int k = 0; k < img.channels; ++k) {
        const double j = img.at(y, x, k);
        out.at(y, x, k) = static_cast<float>(clamp01(static_cast<float>(j * t + airlight * (1.0 - t))));
      }
    }
  }
  return out;
}

namespace {

const char* kClassNames[] = {"circle", "square",   "triangle", "ring",    "plus",
                             "hstripe", "vstripe", "checker",  "diamond", "xcross"};

bool in_shape(int label, double dx, double dy, double r, double y_abs, double cy) {
  const double dist = std::sqrt(dx * dx + dy * dy);
  switch (label) {
    case 0:  // circle
      return dist <= r * 0.9;
    case 1:  // square
      return std::abs(dx) <= r * 0.78 && std::abs(dy) <= r * 0.78;
    case 2: {  // upward triangle
      if (dy < -r || dy > r) return false;
      const double half_w = r * (dy + r) / (2.0 * r);
      return std::abs(dx) <= half_w;
    }
    case 3:  // ring
      return dist <= r && dist > r * 0.58;
    case 4:  // plus
      return (std::abs(dx) <= r * 0.3 && std::abs(dy) <= r) ||
             (std::abs(dy) <= r * 0.3 && std::abs(dx) <= r);
    case 5:  // horizontal stripes
      if (std::abs(dx) > r || std::abs(dy) > r) return false;
      return static_cast<long>(std::floor((y_abs - cy) / 2.5)) % 2 == 0;
    case 6:  // vertical stripes
      if (std::abs(dx) > r || std::abs(dy) > r) return false;
      return static_cast<long>(std::floor(dx / 2.5)) % 2 == 0;
    case 7:  // checkerboard
      if (std::abs(dx) > r || std::abs(dy) > r) return false;
      return (static_cast<long>(std::floor(dx / 3.0)) + static_cast<long>(std::floor(dy / 3.0))) % 2 == 0;
    case 8:  // diamond
      return std::abs(dx) + std::abs(dy) <= r;
    case 9: {  // x-cross
      const double u = (dx + dy) * 0.70710678;
      const double v = (dx - dy) * 0.70710678;
      return (std::abs(u) <= r * 0.3 && std::abs(v) <= r) ||
             (std::abs(v) <= r * 0.3 && std::abs(u) <= r);
    }
    default:
      throw std::invalid_argument("render_corpus_image: label out of range");
  }
}

}  // namespace

int corpus_num_classes() { return 10; }

std::string corpus_class_name(int label) {
  if (label < 0 || label >= corpus_num_classes()) {
    throw std::invalid_argument("corpus_class_name: label out of range");
  }
  return kClassNames[label];
}

ImageTensor render_corpus_image(int label, int image_size, std::mt19937_64& rng) {
  if (label < 0 || label >= corpus_num_classes()) {
    throw std::invalid_argument("render_corpus_image: label out of range");
  }
  std::uniform_real_distribution<double> bg_dist(0.08, 0.38);
  std::uniform_real_distribution<double> fg_dist(0.62, 0.95);
  std::uniform_real_distribution<double> grad_dist(-0.06, 0.06);
  std::uniform_real_distribution<double> jitter(-3.0, 3.0);
  std::uniform_real_distribution<double> radius_frac(0.26, 0.38);
  std::normal_distribution<double> noise(0.0, 0.015);

  double bg[3], fg[3], gx[3], gy[3];
  for (int k = 0; k < 3; ++k) {
    bg[k] = bg_dist(rng);
    fg[k] = fg_dist(rng);
    gx[k] = grad_dist(rng);
    gy[k] = grad_dist(rng);
  }
  const double cx = image_size / 2.0 + jitter(rng);
  const double cy = image_size / 2.0 + jitter(rng);
  const double r = radius_frac(rng) * image_size;

  ImageTensor img(image_size, image_size, 3);
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const double dx = x - cx;
      const double dy = y - cy;
      const bool fgp = in_shape(label, dx, dy, r, y, cy);
      const double u = static_cast<double>(x) / image_size - 0.5;
      const double v = static_cast<double>(y) / image_size - 0.5;
      for (int k = 0; k < 3; ++k) {
        double val = fgp ? fg[k] : bg[k] + gx[k] * u + gy[k] * v;
        val += noise(rng);
        img.at(y, x, k) = clamp01(static_cast<float>(val));
      }
    }
  }
  return img;
}

ImageTensor DegradationParams::apply(const ImageTensor& img) const {
  if (kind == "none") return img;
  if (kind == "lowlight") return degrade_lowlight(img, gamma);
  if (kind == "haze") return degrade_haze(img, beta, airlight, parse_depth_mode(depth_mode));
  throw std::invalid_argument("DegradationParams: unknown kind " + kind);
}

namespace {

json degradation_to_json(const DegradationParams& d) {
  json j;
  j["kind"] = d.kind;
  if (d.kind == "lowlight") {
    j["gamma"] = d.gamma;
  } else if (d.kind == "haze") {
    j["beta"] = d.beta;
    j["airlight"] = d.airlight;
    j["depth_mode"] = d.depth_mode;
  }
  return j;
}

DegradationParams degradation_from_json(const json& j) {
  DegradationParams d;
  d.kind = j.value("kind", "none");
  d.gamma = j.value("gamma", 1.0);
  d.beta = j.value("beta", 0.0);
  d.airlight = j.value("airlight", 0.0);
  d.depth_mode = j.value("depth_mode", "radial");
  return d;
}

json data_config_to_json(const DataConfig& c) {
  return json{{"image_size", c.image_size},
              {"num_classes", c.num_classes},
              {"degradation", c.degradation},
              {"train_gamma", c.train_gamma},
              {"pretrain_gamma", c.pretrain_gamma},
              {"train_beta_scale_a", c.train_beta_scale_a},
              {"train_beta_scale_b", c.train_beta_scale_b},
              {"pretrain_beta_scale_a", c.pretrain_beta_scale_a},
              {"pretrain_beta_scale_b", c.pretrain_beta_scale_b},
              {"airlight", c.airlight},
              {"depth_mode", c.depth_mode}};
}

// Degradation draw for one sample, from either the train or pretrain subrange.
DegradationParams draw_degradation(const DataConfig& c, bool pretrain_range,
                                   std::mt19937_64& rng) {
  DegradationParams d;
  if (c.degradation == "lowlight") {
    d.kind = "lowlight";
    const auto& range = pretrain_range ? c.pretrain_gamma : c.train_gamma;
    d.gamma = std::uniform_real_distribution<double>(range[0], range[1])(rng);
  } else if (c.degradation == "haze") {
    d.kind = "haze";
    const bool scale_b = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
    const auto& range = pretrain_range ? (scale_b ? c.pretrain_beta_scale_b : c.pretrain_beta_scale_a)
                                       : (scale_b ? c.train_beta_scale_b : c.train_beta_scale_a);
    d.beta = std::uniform_real_distribution<double>(range[0], range[1])(rng);
    d.airlight = std::uniform_real_distribution<double>(c.airlight[0], c.airlight[1])(rng);
    d.depth_mode = c.depth_mode;
  } else {
    throw std::invalid_argument("build_datasets: unknown degradation " + c.degradation);
  }
  return d;
}

std::string sample_id(int source_id) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06d", source_id);
  return std::string(buf);
}

}  // namespace

void save_manifest(const DatasetManifest& m, const std::filesystem::path& root) {
  const auto dir = root / m.split;
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "manifest.jsonl");
  if (!out) {
    throw std::runtime_error("save_manifest: cannot write manifest for split " + m.split);
  }
  json header;
  header["type"] = "header";
  header["split"] = m.split;
  header["seed"] = m.seed;
  header["params"] = json::parse(m.params_json.empty() ? "{}" : m.params_json);
  out << header.dump() << "\n";
  for (const auto& s : m.samples) {
    json j;
    j["type"] = "sample";
    j["id"] = s.id;
    j["file"] = s.file;
    j["label"] = s.label;
    j["class_name"] = s.class_name;
    j["source_id"] = s.source_id;
    j["degradation"] = degradation_to_json(s.degradation);
    if (!s.ref_file.empty()) j["ref_file"] = s.ref_file;
    out << j.dump() << "\n";
  }
}

DatasetManifest load_manifest(const std::filesystem::path& root, const std::string& split) {
  std::ifstream in(root / split / "manifest.jsonl");
  if (!in) {
    throw std::runtime_error("load_manifest: missing manifest for split " + split + " under " +
                             root.string());
  }
  DatasetManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    const std::string type = j.value("type", "");
    if (type == "header") {
      m.split = j.value("split", split);
      m.seed = j.value("seed", 0ULL);
      m.params_json = j.contains("params") ? j["params"].dump() : "{}";
    } else if (type == "sample") {
      SampleRecord s;
      s.id = j.at("id").get<std::string>();
      s.file = j.at("file").get<std::string>();
      s.label = j.at("label").get<int>();
      s.class_name = j.value("class_name", "");
      s.source_id = j.value("source_id", 0);
      s.degradation = degradation_from_json(j.at("degradation"));
      s.ref_file = j.value("ref_file", "");
      m.samples.push_back(std::move(s));
    }
  }
  if (m.samples.empty()) {
    throw std::runtime_error("load_manifest: empty split " + split);
  }
  return m;
}

std::map<std::string, DatasetManifest> build_datasets(const DataConfig& config,
                                                      std::uint64_t seed,
                                                      const std::filesystem::path& out_root) {
  if (config.num_classes != corpus_num_classes()) {
    throw std::invalid_argument("build_datasets: corpus provides exactly 10 classes");
  }
  struct SplitPlan {
    std::string name;
    int count;
    bool degraded;        // store the degraded image
    bool pretrain_range;  // use the pretrain degradation subrange
    bool store_ref;       // also store the clean reference split
    bool clean_with_params;  // store clean image but record degradation params
  };
  const std::vector<SplitPlan> plans = {
      {"clean_train", config.clean_train, false, false, false, false},
      {"degraded_train", config.degraded_train, true, false, false, false},
      {"clean_test", config.clean_test, false, false, false, false},
      {"degraded_test", config.degraded_test, true, false, true, false},
      {"restoration_pretrain", config.restoration_pretrain, false, true, false, true},
      {"restoration_val", config.restoration_val, false, true, false, true},
  };
  for (const auto& p : plans) {
    if (p.count <= 0) {
      throw std::invalid_argument("build_datasets: empty split " + p.name);
    }
  }

  const std::string params = data_config_to_json(config).dump();
  std::map<std::string, DatasetManifest> result;
  DatasetManifest ref_manifest;
  ref_manifest.split = "degraded_test_ref";
  ref_manifest.seed = seed;
  ref_manifest.params_json = params;

  int next_source_id = 0;
  for (const auto& plan : plans) {
    DatasetManifest m;
    m.split = plan.name;
    m.seed = seed;
    m.params_json = params;
    for (int i = 0; i < plan.count; ++i) {
      const int source_id = next_source_id++;
      const int label = source_id % config.num_classes;
      auto img_rng = make_rng(seed, "img-" + std::to_string(source_id));
      ImageTensor clean = render_corpus_image(label, config.image_size, img_rng);

      SampleRecord rec;
      rec.id = sample_id(source_id);
      rec.label = label;
      rec.class_name = corpus_class_name(label);
      rec.source_id = source_id;
      rec.file = plan.name + "/" + std::to_string(label) + "/" + rec.id + ".png";

      ImageTensor stored = clean;
      if (plan.degraded || plan.clean_with_params) {
        auto deg_rng = make_rng(seed, "deg-" + std::to_string(source_id));
        rec.degradation = draw_degradation(config, plan.pretrain_range, deg_rng);
        if (plan.degraded) stored = rec.degradation.apply(clean);
      }
      save_png(stored, out_root / rec.file);

      if (plan.store_ref) {
        SampleRecord ref = rec;
        ref.file = "degraded_test_ref/" + std::to_string(label) + "/" + rec.id + ".png";
        ref.degradation = DegradationParams{};
        ref.ref_file.clear();
        save_png(clean, out_root / ref.file);
        rec.ref_file = ref.file;
        ref_manifest.samples.push_back(std::move(ref));
      }
      m.samples.push_back(std::move(rec));
    }
    save_manifest(m, out_root);
    result.emplace(plan.name, std::move(m));
  }
  save_manifest(ref_manifest, out_root);
  result.emplace(ref_manifest.split, std::move(ref_manifest));
  return result;
}

LoadedDataset load_split(const std::filesystem::path& root, const std::string& split,
                         int max_images) {
  const DatasetManifest m = load_manifest(root, split);
  LoadedDataset out;
  for (const auto& s : m.samples) {
    if (max_images > 0 && out.images.size() >= static_cast<size_t>(max_images)) break;
    out.images.push_back(load_png(root / s.file));
    out.labels.push_back(s.label);
    out.records.push_back(s);
  }
  return out;
}

RestorationPairs load_restoration_pairs(const std::filesystem::path& root,
                                        const std::string& split, int max_images) {
  const DatasetManifest m = load_manifest(root, split);
  RestorationPairs out;
  for (const auto& s : m.samples) {
    if (max_images > 0 && out.size() >= static_cast<size_t>(max_images)) break;
    ImageTensor clean = load_png(root / s.file);
    out.degraded.push_back(s.degradation.apply(clean));
    out.clean.push_back(std::move(clean));
  }
  return out;
}

RestorationPairs load_degraded_test_pairs(const std::filesystem::path& root, int max_images) {
  const DatasetManifest m = load_manifest(root, "degraded_test");
  RestorationPairs out;
  for (const auto& s : m.samples) {
    if (max_images > 0 && out.size() >= static_cast<size_t>(max_images)) break;
    if (s.ref_file.empty()) {
      throw std::runtime_error("load_degraded_test_pairs: sample " + s.id + " has no ref_file");
    }
    out.degraded.push_back(load_png(root / s.file));
    out.clean.push_back(load_png(root / s.ref_file));
  }
  return out;
}

}  // namespace vat
