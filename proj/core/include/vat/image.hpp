#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace vat {

// H x W x C image with real values in [0, 1], row-major HWC. The currency of
// every pipeline stage; conversions to framework tensors live in nets.hpp so
// this header stays dependency-free.
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> values;

  ImageTensor() = default;
  ImageTensor(int h, int w, int c, float fill = 0.0f);

  float& at(int y, int x, int c) {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  float at(int y, int x, int c) const {
    return values[(static_cast<size_t>(y) * width + x) * channels + c];
  }
  size_t size() const { return values.size(); }
  bool same_shape(const ImageTensor& other) const {
    return height == other.height && width == other.width && channels == other.channels;
  }

  // Throws std::invalid_argument when a value is outside [0,1] or channels
  // are not 1 or 3.
  void check_valid(const char* what = "ImageTensor") const;
};

inline float clamp01(float v) { return v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v); }

// 8-bit PNG round trip; values quantized to 1/255 steps.
ImageTensor load_png(const std::filesystem::path& path);
void save_png(const ImageTensor& img, const std::filesystem::path& path);

// Horizontal concatenation with a 1px white separator, for comparison panels.
ImageTensor hconcat(const std::vector<ImageTensor>& panels);

// Grayscale [0,1] map rendered through a blue-to-red colormap, 3 channels.
ImageTensor colorize_heatmap(const ImageTensor& gray);

}  // namespace vat
