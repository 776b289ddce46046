#include "vat/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <stdexcept>

namespace vat {

ImageTensor::ImageTensor(int h, int w, int c, float fill)
    : height(h), width(w), channels(c),
      values(static_cast<size_t>(h) * w * c, fill) {
  if (h < 1 || w < 1 || (c != 1 && c != 3)) {
    throw std::invalid_argument("ImageTensor: invalid shape");
  }
}

void ImageTensor::check_valid(const char* what) const {
  if (channels != 1 && channels != 3) {
    throw std::invalid_argument(std::string(what) + ": channels must be 1 or 3");
  }
  if (values.size() != static_cast<size_t>(height) * width * channels) {
    throw std::invalid_argument(std::string(what) + ": buffer size mismatch");
  }
  for (float v : values) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw std::invalid_argument(std::string(what) + ": value outside [0,1]");
    }
  }
}

ImageTensor load_png(const std::filesystem::path& path) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) {
    throw std::runtime_error("load_png: unreadable image " + path.string());
  }
  if (mat.channels() == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_BGRA2BGR);
  }
  const int c = mat.channels();
  if (c != 1 && c != 3) {
    throw std::runtime_error("load_png: unsupported channel count");
  }
  ImageTensor img(mat.rows, mat.cols, c);
  for (int y = 0; y < mat.rows; ++y) {
    const uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < mat.cols; ++x) {
      for (int k = 0; k < c; ++k) {
        // OpenCV stores BGR; flip to RGB.
        const int src = c == 3 ? 2 - k : k;
        img.at(y, x, k) = static_cast<float>(row[x * c + src]) / 255.0f;
      }
    }
  }
  return img;
}

void save_png(const ImageTensor& img, const std::filesystem::path& path) {
  cv::Mat mat(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = mat.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int k = 0; k < img.channels; ++k) {
        const int dst = img.channels == 3 ? 2 - k : k;
        row[x * img.channels + dst] =
            static_cast<uint8_t>(std::lround(clamp01(img.at(y, x, k)) * 255.0f));
      }
    }
  }
  std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) {
    throw std::runtime_error("save_png: failed to write " + path.string());
  }
}

ImageTensor hconcat(const std::vector<ImageTensor>& panels) {
  if (panels.empty()) {
    throw std::invalid_argument("hconcat: empty panel list");
  }
  const int h = panels.front().height;
  const int c = panels.front().channels;
  int total_w = 0;
  for (const auto& p : panels) {
    if (p.height != h || p.channels != c) {
      throw std::invalid_argument("hconcat: panel shape mismatch");
    }
    total_w += p.width + 1;
  }
  ImageTensor out(h, total_w - 1, c, 1.0f);
  int x0 = 0;
  for (const auto& p : panels) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < p.width; ++x) {
        for (int k = 0; k < c; ++k) out.at(y, x0 + x, k) = p.at(y, x, k);
      }
    }
    x0 += p.width + 1;
  }
  return out;
}

ImageTensor colorize_heatmap(const ImageTensor& gray) {
  if (gray.channels != 1) {
    throw std::invalid_argument("colorize_heatmap: expects single-channel input");
  }
  ImageTensor out(gray.height, gray.width, 3);
  for (int y = 0; y < gray.height; ++y) {
    for (int x = 0; x < gray.width; ++x) {
      const float v = clamp01(gray.at(y, x, 0));
      out.at(y, x, 0) = v;                                  // red rises
      out.at(y, x, 1) = 1.0f - std::abs(2.0f * v - 1.0f);   // green peaks mid
      out.at(y, x, 2) = 1.0f - v;                           // blue falls
    }
  }
  return out;
}

}  // namespace vat
