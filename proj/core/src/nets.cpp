#include "vat/nets.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json_util.hpp"
#include "vat/manifest.hpp"
#include "vat/rng.hpp"
#include "vat/synthdata.hpp"

namespace vat {

namespace F = torch::nn::functional;

void set_global_determinism(std::uint64_t seed) {
  static std::atomic<bool> threads_configured{false};
  if (!threads_configured.exchange(true)) {
    at::set_num_threads(1);
    try {
      at::set_num_interop_threads(1);
    } catch (const c10::Error&) {
      // Interop pool already started; thread count is fixed for the process.
    }
  }
  torch::manual_seed(seed);
}

torch::Tensor to_tensor(const ImageTensor& img) {
  auto t = torch::from_blob(const_cast<float*>(img.values.data()),
                            {img.height, img.width, img.channels}, torch::kFloat32);
  return t.permute({2, 0, 1}).clone();
}

torch::Tensor to_batch(const std::vector<ImageTensor>& imgs) {
  if (imgs.empty()) {
    throw std::invalid_argument("to_batch: empty image list");
  }
  std::vector<torch::Tensor> stacked;
  stacked.reserve(imgs.size());
  for (const auto& img : imgs) {
    if (!img.same_shape(imgs.front())) {
      throw std::invalid_argument("to_batch: mixed image shapes");
    }
    stacked.push_back(to_tensor(img));
  }
  return torch::stack(stacked);
}

ImageTensor from_tensor(const torch::Tensor& chw) {
  torch::Tensor t = chw;
  if (t.dim() == 4) {
    if (t.size(0) != 1) {
      throw std::invalid_argument("from_tensor: batch tensor must have a single image");
    }
    t = t.squeeze(0);
  }
  if (t.dim() != 3) {
    throw std::invalid_argument("from_tensor: expected a CHW tensor");
  }
  t = t.detach().to(torch::kFloat32).clamp(0, 1).permute({1, 2, 0}).contiguous();
  ImageTensor img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)),
                  static_cast<int>(t.size(2)));
  std::memcpy(img.values.data(), t.data_ptr<float>(), img.values.size() * sizeof(float));
  return img;
}

// --- blocks -----------------------------------------------------------------

ChannelLayerNormImpl::ChannelLayerNormImpl(int dim) {
  weight = register_parameter("weight", torch::ones({1, dim, 1, 1}));
  bias = register_parameter("bias", torch::zeros({1, dim, 1, 1}));
}

torch::Tensor ChannelLayerNormImpl::forward(const torch::Tensor& x) {
  auto mu = x.mean(1, /*keepdim=*/true);
  auto var = x.var(1, /*unbiased=*/false, /*keepdim=*/true);
  return (x - mu) / torch::sqrt(var + 1e-5) * weight + bias;
}

TransformerBlockImpl::TransformerBlockImpl(int dim, double ffn_expansion) {
  const int hidden = std::max(1, static_cast<int>(dim * ffn_expansion));
  norm1 = register_module("norm1", ChannelLayerNorm(dim));
  qkv = register_module("qkv", torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim * 3, 1)));
  qkv_dw = register_module(
      "qkv_dw", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(dim * 3, dim * 3, 3).padding(1).groups(dim * 3)));
  attn_out = register_module("attn_out",
                             torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, dim, 1)));
  temperature = register_parameter("temperature", torch::ones({1}));
  norm2 = register_module("norm2", ChannelLayerNorm(dim));
  ffn_in = register_module("ffn_in",
                           torch::nn::Conv2d(torch::nn::Conv2dOptions(dim, hidden * 2, 1)));
  ffn_dw = register_module(
      "ffn_dw", torch::nn::Conv2d(
                    torch::nn::Conv2dOptions(hidden * 2, hidden * 2, 3).padding(1).groups(hidden * 2)));
  ffn_out = register_module("ffn_out",
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden, dim, 1)));
}

torch::Tensor TransformerBlockImpl::forward(torch::Tensor x) {
  const auto b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);

  // Channel attention: tokens are channels, so the attention matrix is C x C
  // and spatial resolution only enters through the dot products.
  auto qkv_maps = qkv_dw->forward(qkv->forward(norm1->forward(x)));
  auto chunks = qkv_maps.chunk(3, /*dim=*/1);
  auto q = chunks[0].reshape({b, c, h * w});
  auto k = chunks[1].reshape({b, c, h * w});
  auto v = chunks[2].reshape({b, c, h * w});
  q = F::normalize(q, F::NormalizeFuncOptions().dim(-1));
  k = F::normalize(k, F::NormalizeFuncOptions().dim(-1));
  auto attn = torch::softmax(torch::bmm(q, k.transpose(1, 2)) * temperature, -1);
  auto attended = torch::bmm(attn, v).reshape({b, c, h, w});
  x = x + attn_out->forward(attended);

  // Gated feed-forward: one branch gates the other after a depthwise conv.
  auto gates = ffn_dw->forward(ffn_in->forward(norm2->forward(x))).chunk(2, /*dim=*/1);
  x = x + ffn_out->forward(torch::gelu(gates[0]) * gates[1]);
  return x;
}

GatedFusionImpl::GatedFusionImpl(int hidden_dim_, int channels) : hidden_dim(hidden_dim_) {
  conv1 = register_module(
      "conv1", torch::nn::Conv2d(torch::nn::Conv2dOptions(channels * 2, hidden_dim, 3).padding(1)));
  conv2 = register_module(
      "conv2", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden_dim, hidden_dim, 3).padding(1)));
  conv3 = register_module(
      "conv3", torch::nn::Conv2d(torch::nn::Conv2dOptions(hidden_dim, channels, 3).padding(1)));
}

torch::Tensor GatedFusionImpl::gate_map(const torch::Tensor& degraded,
                                        const torch::Tensor& restored) {
  auto h = torch::relu(conv1->forward(torch::cat({degraded, restored}, 1)));
  h = torch::relu(conv2->forward(h));
  return torch::sigmoid(conv3->forward(h));
}

torch::Tensor GatedFusionImpl::forward(const torch::Tensor& degraded,
                                       const torch::Tensor& restored) {
  auto s = gate_map(degraded, restored);
  return s * degraded + (1 - s) * restored;
}

UShapeTranslatorImpl::UShapeTranslatorImpl(int base_dim_, int channels) : base_dim(base_dim_) {
  if (base_dim < 1) {
    throw std::invalid_argument("UShapeTranslator: base_dim must be >= 1");
  }
  const int d1 = base_dim, d2 = base_dim * 2, d4 = base_dim * 4;
  embed = register_module("embed",
                          torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, d1, 3).padding(1)));
  enc1 = register_module("enc1", TransformerBlock(d1));
  down1 = register_module(
      "down1", torch::nn::Conv2d(torch::nn::Conv2dOptions(d1, d2, 3).stride(2).padding(1)));
  enc2 = register_module("enc2", TransformerBlock(d2));
  down2 = register_module(
      "down2", torch::nn::Conv2d(torch::nn::Conv2dOptions(d2, d4, 3).stride(2).padding(1)));
  bottleneck = register_module("bottleneck", TransformerBlock(d4));
  up2 = register_module("up2",
                        torch::nn::Conv2d(torch::nn::Conv2dOptions(d4, d2, 3).padding(1)));
  fuse2 = register_module("fuse2", torch::nn::Conv2d(torch::nn::Conv2dOptions(d2 * 2, d2, 1)));
  dec2 = register_module("dec2", TransformerBlock(d2));
  up1 = register_module("up1",
                        torch::nn::Conv2d(torch::nn::Conv2dOptions(d2, d1, 3).padding(1)));
  fuse1 = register_module("fuse1", torch::nn::Conv2d(torch::nn::Conv2dOptions(d1 * 2, d1, 1)));
  dec1 = register_module("dec1", TransformerBlock(d1));
  out_proj = register_module(
      "out_proj", torch::nn::Conv2d(torch::nn::Conv2dOptions(d1, channels, 3).padding(1)));
}

void UShapeTranslatorImpl::configure_identity() {
  torch::NoGradGuard guard;
  out_proj->weight.zero_();
  out_proj->bias.zero_();
}

torch::Tensor UShapeTranslatorImpl::forward(const torch::Tensor& x) {
  if (x.size(2) % 4 != 0 || x.size(3) % 4 != 0) {
    throw std::invalid_argument("UShapeTranslator: spatial size must be divisible by 4");
  }
  auto upsample = [](const torch::Tensor& t) {
    return F::interpolate(
        t, F::InterpolateFuncOptions().scale_factor(std::vector<double>{2.0, 2.0})
               .mode(torch::kBilinear).align_corners(false));
  };

  auto e1 = enc1->forward(embed->forward(x));
  auto e2 = enc2->forward(down1->forward(e1));
  auto bott = bottleneck->forward(down2->forward(e2));
  auto d2f = dec2->forward(fuse2->forward(torch::cat({up2->forward(upsample(bott)), e2}, 1)));
  auto d1f = dec1->forward(fuse1->forward(torch::cat({up1->forward(upsample(d2f)), e1}, 1)));
  return torch::clamp(x + out_proj->forward(d1f), 0, 1);
}

RestorationNetImpl::RestorationNetImpl(int width, int channels) {
  trunk = register_module(
      "trunk",
      torch::nn::Sequential(
          torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, width, 3).padding(1)),
          torch::nn::ReLU(),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1)),
          torch::nn::ReLU(),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width, 3).padding(1)),
          torch::nn::ReLU(),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(width, channels, 3).padding(1))));
}

torch::Tensor RestorationNetImpl::forward(const torch::Tensor& x) {
  return torch::clamp(x + trunk->forward(x), 0, 1);
}

ClassifierNetImpl::ClassifierNetImpl(int width, int num_classes, int channels) {
  feature_dim = width * 4;
  features = register_module(
      "features",
      torch::nn::Sequential(
          torch::nn::Conv2d(torch::nn::Conv2dOptions(channels, width, 3).padding(1)),
          torch::nn::ReLU(),
          torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(width, width * 2, 3).padding(1)),
          torch::nn::ReLU(),
          torch::nn::MaxPool2d(torch::nn::MaxPool2dOptions(2)),
          torch::nn::Conv2d(torch::nn::Conv2dOptions(width * 2, width * 4, 3).padding(1)),
          torch::nn::ReLU(),
          torch::nn::AdaptiveAvgPool2d(torch::nn::AdaptiveAvgPool2dOptions(1))));
  head = register_module("head", torch::nn::Linear(feature_dim, num_classes));
}

torch::Tensor ClassifierNetImpl::embed(const torch::Tensor& x) {
  return features->forward(x).flatten(1);
}

torch::Tensor ClassifierNetImpl::forward(const torch::Tensor& x) {
  return head->forward(embed(x));
}

int ClassifierNetImpl::embedding_dim() const { return feature_dim; }

// --- checkpoints ------------------------------------------------------------

std::int64_t parameter_count(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

double parameter_checksum(const torch::nn::Module& module) {
  double total = 0.0;
  for (const auto& p : module.parameters()) {
    total += p.detach().to(torch::kFloat64).sum().item<double>();
  }
  return total;
}

void save_checkpoint(const torch::nn::Module& module, const std::filesystem::path& path,
                     const std::string& kind, const std::string& extra_json) {
  std::filesystem::create_directories(path.parent_path());
  torch::serialize::OutputArchive archive;
  module.save(archive);
  archive.save_to(path.string());

  json meta;
  meta["version"] = kVersion;
  meta["kind"] = kind;
  meta["parameters"] = parameter_count(module);
  meta["checksum"] = parameter_checksum(module);
  meta["extra"] = json::parse(extra_json);
  std::ofstream out(path.string() + ".json");
  out << meta.dump(2) << "\n";
}

void load_checkpoint(torch::nn::Module& module, const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw std::runtime_error("load_checkpoint: missing " + path.string());
  }
  torch::serialize::InputArchive archive;
  archive.load_from(path.string());
  module.load(archive);

  std::ifstream in(path.string() + ".json");
  if (in) {
    json meta = json::parse(in);
    const auto expected = meta.value("parameters", static_cast<std::int64_t>(-1));
    if (expected >= 0 && expected != parameter_count(module)) {
      throw std::runtime_error("load_checkpoint: parameter count mismatch for " + path.string() +
                               " (module shape differs from the checkpoint sidecar)");
    }
    const double checksum = meta.value("checksum", 0.0);
    if (std::abs(checksum - parameter_checksum(module)) > 1e-6) {
      throw std::runtime_error("load_checkpoint: checksum mismatch for " + path.string());
    }
  }
}

std::string read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path.string() + ".json");
  if (!in) {
    throw std::runtime_error("read_checkpoint_meta: missing sidecar for " + path.string());
  }
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

VatModules VatModules::make(const TrainConfig& config) {
  VatModules m;
  m.gate = GatedFusion(config.gate_dim);
  m.t_a = UShapeTranslator(config.base_dim);
  m.t_b = UShapeTranslator(config.base_dim);
  return m;
}

std::vector<torch::Tensor> VatModules::parameters() const {
  std::vector<torch::Tensor> params;
  for (const auto& p : gate->parameters()) params.push_back(p);
  for (const auto& p : t_a->parameters()) params.push_back(p);
  for (const auto& p : t_b->parameters()) params.push_back(p);
  return params;
}

void VatModules::save(const std::filesystem::path& dir) const {
  json extra;
  extra["base_dim"] = t_a->base_dim;
  json gate_extra;
  gate_extra["gate_dim"] = gate->hidden_dim;
  save_checkpoint(*gate, dir / "gate.pt", "gate", gate_extra.dump());
  save_checkpoint(*t_a, dir / "t_a.pt", "translator", extra.dump());
  save_checkpoint(*t_b, dir / "t_b.pt", "translator", extra.dump());
}

void VatModules::load(const std::filesystem::path& dir) {
  load_checkpoint(*gate, dir / "gate.pt");
  load_checkpoint(*t_a, dir / "t_a.pt");
  load_checkpoint(*t_b, dir / "t_b.pt");
}

void VatModules::save_a(const std::filesystem::path& dir) const {
  json extra;
  extra["base_dim"] = t_a->base_dim;
  json gate_extra;
  gate_extra["gate_dim"] = gate->hidden_dim;
  save_checkpoint(*gate, dir / "gate.pt", "gate", gate_extra.dump());
  save_checkpoint(*t_a, dir / "t_a.pt", "translator", extra.dump());
}

void VatModules::load_a(const std::filesystem::path& dir) {
  load_checkpoint(*gate, dir / "gate.pt");
  load_checkpoint(*t_a, dir / "t_a.pt");
}

VatModules VatModules::open_a(const std::filesystem::path& dir) {
  const json gate_meta = json::parse(read_checkpoint_meta(dir / "gate.pt"));
  const json t_a_meta = json::parse(read_checkpoint_meta(dir / "t_a.pt"));
  const int base_dim = t_a_meta.at("extra").at("base_dim").get<int>();
  VatModules m;
  m.gate = GatedFusion(gate_meta.at("extra").at("gate_dim").get<int>());
  m.t_a = UShapeTranslator(base_dim);
  m.t_b = UShapeTranslator(base_dim);
  m.load_a(dir);
  return m;
}

// --- frozen-model pretraining -----------------------------------------------

namespace {

double tensor_psnr(const torch::Tensor& a, const torch::Tensor& b) {
  const double mse = torch::mean(torch::square(a - b)).item<double>();
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

PretrainTaskResult pretrain_task_model(const std::filesystem::path& data_root,
                                       const PretrainConfig& config, int num_classes,
                                       std::uint64_t seed,
                                       const std::filesystem::path& out_dir) {
  torch::manual_seed(mix_seed(seed, "pretrain-task"));
  const LoadedDataset train = load_split(data_root, "clean_train");
  const LoadedDataset test = load_split(data_root, "clean_test");

  auto x_train = to_batch(train.images);
  auto y_train = torch::tensor(std::vector<std::int64_t>(train.labels.begin(), train.labels.end()));
  ClassifierNet net(config.task_width, num_classes);
  net->train();
  torch::optim::AdamW opt(net->parameters(), torch::optim::AdamWOptions(config.task_lr));

  auto rng = make_rng(seed, "pretrain-task-shuffle");
  double last_loss = 0.0;
  for (int epoch = 0; epoch < config.task_epochs; ++epoch) {
    const auto order = shuffled_indices(train.images.size(), rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (size_t start = 0; start < order.size(); start += config.task_batch) {
      const size_t end = std::min(order.size(), start + config.task_batch);
      auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end));
      auto logits = net->forward(x_train.index_select(0, idx));
      auto loss = torch::cross_entropy_loss(logits, y_train.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
      loss_sum += loss.item<double>();
      ++batches;
    }
    last_loss = loss_sum / std::max(1, batches);
  }

  net->eval();
  torch::NoGradGuard guard;
  auto pred = net->forward(to_batch(test.images)).argmax(1);
  auto y_test = torch::tensor(std::vector<std::int64_t>(test.labels.begin(), test.labels.end()));
  const double acc = pred.eq(y_test).to(torch::kFloat64).mean().item<double>();

  PretrainTaskResult result;
  result.train_loss = last_loss;
  result.clean_test_accuracy = acc;
  result.checkpoint = out_dir / "task.pt";
  json extra;
  extra["width"] = config.task_width;
  extra["num_classes"] = num_classes;
  save_checkpoint(*net, result.checkpoint, "classifier", extra.dump());
  return result;
}

PretrainRestorationResult pretrain_restoration_model(const std::filesystem::path& data_root,
                                                     const PretrainConfig& config,
                                                     std::uint64_t seed,
                                                     const std::filesystem::path& out_dir) {
  std::vector<int> snapshots = config.restoration_snapshots;
  std::sort(snapshots.begin(), snapshots.end());
  for (int s : snapshots) {
    if (s < 1 || s > config.restoration_epochs) {
      throw std::invalid_argument("pretrain_restoration_model: snapshot epoch out of range");
    }
  }

  torch::manual_seed(mix_seed(seed, "pretrain-restoration"));
  const RestorationPairs train = load_restoration_pairs(data_root, "restoration_pretrain");
  const RestorationPairs val = load_restoration_pairs(data_root, "restoration_val");
  auto x_train = to_batch(train.degraded);
  auto y_train = to_batch(train.clean);
  auto x_val = to_batch(val.degraded);
  auto y_val = to_batch(val.clean);

  RestorationNet net(config.restoration_width);
  net->train();
  torch::optim::AdamW opt(net->parameters(), torch::optim::AdamWOptions(config.restoration_lr));
  auto rng = make_rng(seed, "pretrain-restoration-shuffle");

  PretrainRestorationResult result;
  json extra;
  extra["width"] = config.restoration_width;
  for (int epoch = 1; epoch <= config.restoration_epochs; ++epoch) {
    const auto order = shuffled_indices(train.size(), rng);
    for (size_t start = 0; start < order.size(); start += config.restoration_batch) {
      const size_t end = std::min(order.size(), start + config.restoration_batch);
      auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + start, order.begin() + end));
      auto loss = torch::l1_loss(net->forward(x_train.index_select(0, idx)),
                                 y_train.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }

    const bool is_snapshot = std::find(snapshots.begin(), snapshots.end(), epoch) != snapshots.end();
    const bool is_final = epoch == config.restoration_epochs;
    if (is_snapshot || is_final) {
      net->eval();
      double psnr;
      {
        torch::NoGradGuard guard;
        psnr = tensor_psnr(net->forward(x_val), y_val);
      }
      if (is_snapshot) {
        const auto path = out_dir / ("restoration_ep" + std::to_string(epoch) + ".pt");
        save_checkpoint(*net, path, "restoration", extra.dump());
        result.snapshot_epochs.push_back(epoch);
        result.val_psnr.push_back(psnr);
        result.checkpoints.push_back(path);
      }
      if (is_final) {
        save_checkpoint(*net, out_dir / "restoration.pt", "restoration", extra.dump());
      }
      net->train();
    }
  }
  return result;
}

}  // namespace vat
