#include "vat/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json_util.hpp"

namespace vat {

namespace {

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void get_if(const json& j, const char* key, std::array<double, 2>& out) {
  if (j.contains(key)) {
    auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw std::invalid_argument(std::string("config: ") + key + " needs 2 values");
    out = {v[0], v[1]};
  }
}

void reject_unknown(const json& j, const std::set<std::string>& known, const char* section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) {
      throw std::invalid_argument(std::string("config: unknown key '") + it.key() + "' in " + section);
    }
  }
}

void apply_data(const json& j, DataConfig& c) {
  reject_unknown(j, {"image_size", "num_classes", "clean_train", "clean_test", "degraded_train",
                     "degraded_test", "restoration_pretrain", "restoration_val", "degradation",
                     "train_gamma", "pretrain_gamma", "train_beta_scale_a", "train_beta_scale_b",
                     "pretrain_beta_scale_a", "pretrain_beta_scale_b", "airlight", "depth_mode"},
                 "data");
  get_if(j, "image_size", c.image_size);
  get_if(j, "num_classes", c.num_classes);
  get_if(j, "clean_train", c.clean_train);
  get_if(j, "clean_test", c.clean_test);
  get_if(j, "degraded_train", c.degraded_train);
  get_if(j, "degraded_test", c.degraded_test);
  get_if(j, "restoration_pretrain", c.restoration_pretrain);
  get_if(j, "restoration_val", c.restoration_val);
  get_if(j, "degradation", c.degradation);
  get_if(j, "train_gamma", c.train_gamma);
  get_if(j, "pretrain_gamma", c.pretrain_gamma);
  get_if(j, "train_beta_scale_a", c.train_beta_scale_a);
  get_if(j, "train_beta_scale_b", c.train_beta_scale_b);
  get_if(j, "pretrain_beta_scale_a", c.pretrain_beta_scale_a);
  get_if(j, "pretrain_beta_scale_b", c.pretrain_beta_scale_b);
  get_if(j, "airlight", c.airlight);
  get_if(j, "depth_mode", c.depth_mode);
}

void apply_pretrain(const json& j, PretrainConfig& c) {
  reject_unknown(j, {"task_epochs", "task_lr", "task_batch", "task_width", "restoration_epochs",
                     "restoration_lr", "restoration_batch", "restoration_width",
                     "restoration_snapshots"},
                 "pretrain");
  get_if(j, "task_epochs", c.task_epochs);
  get_if(j, "task_lr", c.task_lr);
  get_if(j, "task_batch", c.task_batch);
  get_if(j, "task_width", c.task_width);
  get_if(j, "restoration_epochs", c.restoration_epochs);
  get_if(j, "restoration_lr", c.restoration_lr);
  get_if(j, "restoration_batch", c.restoration_batch);
  get_if(j, "restoration_width", c.restoration_width);
  get_if(j, "restoration_snapshots", c.restoration_snapshots);
}

void apply_train(const json& j, TrainConfig& c) {
  reject_unknown(j, {"learning_rate", "batch_size", "epochs", "alpha", "epsilon", "weight_cyc",
                     "weight_mle", "base_dim", "gate_dim", "mixup_mode", "use_gate",
                     "checkpoint_every", "val_images", "device"},
                 "train");
  get_if(j, "learning_rate", c.learning_rate);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "epochs", c.epochs);
  get_if(j, "alpha", c.alpha);
  get_if(j, "epsilon", c.epsilon);
  get_if(j, "weight_cyc", c.weight_cyc);
  get_if(j, "weight_mle", c.weight_mle);
  get_if(j, "base_dim", c.base_dim);
  get_if(j, "gate_dim", c.gate_dim);
  get_if(j, "mixup_mode", c.mixup_mode);
  get_if(j, "use_gate", c.use_gate);
  get_if(j, "checkpoint_every", c.checkpoint_every);
  get_if(j, "val_images", c.val_images);
  get_if(j, "device", c.device);
}

void apply_uncertainty(const json& j, UncertaintyConfig& c) {
  reject_unknown(j, {"density_quantile", "bank_size"}, "uncertainty");
  get_if(j, "density_quantile", c.density_quantile);
  get_if(j, "bank_size", c.bank_size);
}

void apply_sweep(const json& j, SweepConfig& c) {
  reject_unknown(j, {"base_dims", "sweep_epochs"}, "sweep");
  get_if(j, "base_dims", c.base_dims);
  get_if(j, "sweep_epochs", c.sweep_epochs);
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate <= 0 || batch_size <= 0 || epochs <= 0 || base_dim <= 0 || gate_dim <= 0) {
    throw std::invalid_argument("TrainConfig: learning_rate/batch_size/epochs/dims must be positive");
  }
  if (alpha <= 0) {
    throw std::invalid_argument("TrainConfig: alpha must be > 0");
  }
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("TrainConfig: epsilon must be in (0,1]");
  }
  if (mixup_mode != "off" && mixup_mode != "plain" && mixup_mode != "uncertainty") {
    throw std::invalid_argument("TrainConfig: mixup_mode must be off|plain|uncertainty");
  }
}

Config Config::from_json_string(const std::string& text) {
  Config c;
  json j = json::parse(text);
  reject_unknown(j, {"seed", "data", "pretrain", "train", "uncertainty", "sweep"}, "config root");
  get_if(j, "seed", c.seed);
  if (j.contains("data")) apply_data(j.at("data"), c.data);
  if (j.contains("pretrain")) apply_pretrain(j.at("pretrain"), c.pretrain);
  if (j.contains("train")) apply_train(j.at("train"), c.train);
  if (j.contains("uncertainty")) apply_uncertainty(j.at("uncertainty"), c.uncertainty);
  if (j.contains("sweep")) apply_sweep(j.at("sweep"), c.sweep);
  c.train.validate();
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: missing config file " + path.string());
  }
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_string(text);
}

std::string Config::to_json_string(int indent) const {
  json j;
  j["seed"] = seed;
  j["data"] = {{"image_size", data.image_size},
               {"num_classes", data.num_classes},
               {"clean_train", data.clean_train},
               {"clean_test", data.clean_test},
               {"degraded_train", data.degraded_train},
               {"degraded_test", data.degraded_test},
               {"restoration_pretrain", data.restoration_pretrain},
               {"restoration_val", data.restoration_val},
               {"degradation", data.degradation},
               {"train_gamma", data.train_gamma},
               {"pretrain_gamma", data.pretrain_gamma},
               {"train_beta_scale_a", data.train_beta_scale_a},
               {"train_beta_scale_b", data.train_beta_scale_b},
               {"pretrain_beta_scale_a", data.pretrain_beta_scale_a},
               {"pretrain_beta_scale_b", data.pretrain_beta_scale_b},
               {"airlight", data.airlight},
               {"depth_mode", data.depth_mode}};
  j["pretrain"] = {{"task_epochs", pretrain.task_epochs},
                   {"task_lr", pretrain.task_lr},
                   {"task_batch", pretrain.task_batch},
                   {"task_width", pretrain.task_width},
                   {"restoration_epochs", pretrain.restoration_epochs},
                   {"restoration_lr", pretrain.restoration_lr},
                   {"restoration_batch", pretrain.restoration_batch},
                   {"restoration_width", pretrain.restoration_width},
                   {"restoration_snapshots", pretrain.restoration_snapshots}};
  j["train"] = {{"learning_rate", train.learning_rate},
                {"batch_size", train.batch_size},
                {"epochs", train.epochs},
                {"alpha", train.alpha},
                {"epsilon", train.epsilon},
                {"weight_cyc", train.weight_cyc},
                {"weight_mle", train.weight_mle},
                {"base_dim", train.base_dim},
                {"gate_dim", train.gate_dim},
                {"mixup_mode", train.mixup_mode},
                {"use_gate", train.use_gate},
                {"checkpoint_every", train.checkpoint_every},
                {"val_images", train.val_images},
                {"device", train.device}};
  j["uncertainty"] = {{"density_quantile", uncertainty.density_quantile},
                      {"bank_size", uncertainty.bank_size}};
  j["sweep"] = {{"base_dims", sweep.base_dims}, {"sweep_epochs", sweep.sweep_epochs}};
  return j.dump(indent);
}

}  // namespace vat
