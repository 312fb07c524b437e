#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "facecloak/error.hpp"

namespace facecloak {

// Planar-free HWC float image, values in [0, 1], always 3 channels.
struct FaceImage {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // height * width * 3, row-major, RGB

  FaceImage() = default;
  FaceImage(int h, int w) : height(h), width(w), data(static_cast<size_t>(h) * w * 3, 0.f) {}

  size_t pixels() const { return static_cast<size_t>(height) * width; }
  size_t size() const { return data.size(); }

  float* px(int y, int x) { return data.data() + (static_cast<size_t>(y) * width + x) * 3; }
  const float* px(int y, int x) const {
    return data.data() + (static_cast<size_t>(y) * width + x) * 3;
  }

  void clamp01() {
    for (auto& v : data) v = std::clamp(v, 0.f, 1.f);
  }
};

inline void require_shape(const FaceImage& img, int h, int w, const std::string& what) {
  if (img.height != h || img.width != w) {
    throw Error(Errc::shape_mismatch,
                what + ": expected " + std::to_string(h) + "x" + std::to_string(w) + ", got " +
                    std::to_string(img.height) + "x" + std::to_string(img.width));
  }
}

inline std::vector<uint8_t> quantize8(const FaceImage& img) {
  std::vector<uint8_t> out(img.data.size());
  for (size_t i = 0; i < img.data.size(); ++i) {
    const float v = std::clamp(img.data[i], 0.f, 1.f);
    out[i] = static_cast<uint8_t>(std::lround(v * 255.f));
  }
  return out;
}

inline FaceImage dequantize8(std::span<const uint8_t> bytes, int h, int w) {
  FaceImage img(h, w);
  if (bytes.size() != img.data.size()) {
    throw Error(Errc::shape_mismatch, "dequantize8: byte count does not match dimensions");
  }
  for (size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.f;
  return img;
}

// Where the face sits in the source frame; carried alongside aligned crops so
// results can be pasted back or audited.
struct AlignmentRecord {
  std::array<std::array<float, 2>, 5> landmarks{};  // source-frame x,y
  std::array<float, 4> similarity{1.f, 0.f, 0.f, 0.f};  // a, b, tx, ty of the fit
  int source_width = 0;
  int source_height = 0;
};

struct AlignedFace {
  FaceImage image;  // crop_size x crop_size
  AlignmentRecord record;
};

}  // namespace facecloak
