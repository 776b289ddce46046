#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vat/config.hpp"
#include "vat/image.hpp"

namespace vat {

enum class DepthMode { constant, radial };
DepthMode parse_depth_mode(const std::string& s);

// Per-pixel v -> v^gamma. gamma = 1 is the identity; gamma > 1 darkens.
ImageTensor degrade_lowlight(const ImageTensor& img, double gamma);

// Atmospheric scattering: I = J * t + A * (1 - t), t = exp(-beta * d(x)).
// Depth d is a synthetic proxy: 1 everywhere, or radial distance from the
// image center scaled to [0, 1].
ImageTensor degrade_haze(const ImageTensor& img, double beta, double airlight, DepthMode depth);

// The 10-class procedural shape corpus: bright shape on a darker gradient
// background, with positional jitter and pixel noise.
int corpus_num_classes();
std::string corpus_class_name(int label);
ImageTensor render_corpus_image(int label, int image_size, std::mt19937_64& rng);

struct DegradationParams {
  std::string kind = "none";  // "none" | "lowlight" | "haze"
  double gamma = 1.0;
  double beta = 0.0;
  double airlight = 0.0;
  std::string depth_mode = "radial";

  ImageTensor apply(const ImageTensor& img) const;
};

struct SampleRecord {
  std::string id;
  std::string file;  // relative to the dataset root
  int label = 0;
  std::string class_name;
  int source_id = 0;
  DegradationParams degradation;
  std::string ref_file;  // clean reference, degraded_test only
};

struct DatasetManifest {
  std::string split;
  std::uint64_t seed = 0;
  std::string params_json;  // creation parameters snapshot
  std::vector<SampleRecord> samples;
};

// Writes <root>/<split>/manifest.jsonl (header line + one line per sample).
void save_manifest(const DatasetManifest& m, const std::filesystem::path& root);
DatasetManifest load_manifest(const std::filesystem::path& root, const std::string& split);

// Generates every split. clean_train and degraded_train draw from disjoint
// source-image id ranges (unpaired); restoration splits use the pretrain
// degradation subrange, disjoint from the degraded_train subrange. Two builds
// with the same config produce byte-identical manifests.
std::map<std::string, DatasetManifest> build_datasets(const DataConfig& config,
                                                      std::uint64_t seed,
                                                      const std::filesystem::path& out_root);

struct LoadedDataset {
  std::vector<ImageTensor> images;
  std::vector<int> labels;
  std::vector<SampleRecord> records;

  size_t size() const { return images.size(); }
};

LoadedDataset load_split(const std::filesystem::path& root, const std::string& split,
                         int max_images = 0);

// Restoration pairs: input = record's degradation applied to the stored clean
// image, target = the stored clean image.
struct RestorationPairs {
  std::vector<ImageTensor> degraded;
  std::vector<ImageTensor> clean;

  size_t size() const { return degraded.size(); }
};

RestorationPairs load_restoration_pairs(const std::filesystem::path& root,
                                        const std::string& split, int max_images = 0);

// Paired degraded/clean test views (degraded_test + its _ref split).
RestorationPairs load_degraded_test_pairs(const std::filesystem::path& root, int max_images = 0);

}  // namespace vat
