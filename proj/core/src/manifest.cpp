#include "vat/manifest.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json_util.hpp"

namespace vat {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fingerprint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("fingerprint_file: cannot open " + path.string());
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string s = ss.str();
  return fnv1a64(s.data(), s.size());
}

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

void RunManifest::write(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json j;
  j["command"] = command;
  j["config"] = json::parse(config_snapshot.empty() ? "{}" : config_snapshot);
  j["seed"] = seed;
  j["input_fingerprints"] = input_fingerprints;
  j["output_paths"] = output_paths;
  j["notes"] = notes;
  j["wall_clock_seconds"] = wall_clock_seconds;
  j["version"] = kVersion;
  std::ofstream out(dir / "run_manifest.json");
  out << j.dump(2) << "\n";
  if (!out) {
    throw std::runtime_error("RunManifest: failed to write manifest in " + dir.string());
  }
}

RunManifest RunManifest::read(const std::filesystem::path& dir) {
  std::ifstream in(dir / "run_manifest.json");
  if (!in) {
    throw std::runtime_error("RunManifest: missing manifest in " + dir.string());
  }
  json j = json::parse(in);
  RunManifest m;
  m.command = j.value("command", "");
  m.config_snapshot = j.contains("config") ? j["config"].dump() : "{}";
  m.seed = j.value("seed", 0ULL);
  if (j.contains("input_fingerprints")) {
    m.input_fingerprints = j["input_fingerprints"].get<std::map<std::string, std::string>>();
  }
  if (j.contains("output_paths")) {
    m.output_paths = j["output_paths"].get<std::vector<std::string>>();
  }
  if (j.contains("notes")) {
    m.notes = j["notes"].get<std::map<std::string, std::string>>();
  }
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  return m;
}

}  // namespace vat
