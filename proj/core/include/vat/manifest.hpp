#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vat {

inline constexpr const char* kVersion = "0.1.0";

// 64-bit FNV-1a, used for dataset/checkpoint fingerprints.
std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fingerprint_file(const std::filesystem::path& path);
std::string to_hex(std::uint64_t v);

// Provenance record written into every command's output directory. The config
// snapshot plus seeds are sufficient to rerun the command bit-identically in
// determinism mode.
struct RunManifest {
  std::string command;
  std::string config_snapshot;  // JSON text
  std::uint64_t seed = 0;
  std::map<std::string, std::string> input_fingerprints;
  std::vector<std::string> output_paths;
  std::map<std::string, std::string> notes;
  double wall_clock_seconds = 0.0;

  void write(const std::filesystem::path& dir) const;  // dir/run_manifest.json
  static RunManifest read(const std::filesystem::path& dir);
};

}  // namespace vat
