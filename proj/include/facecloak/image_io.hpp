#pragma once

#include <string>
#include <vector>

#include <opencv2/imgcodecs.hpp>

#include "facecloak/image.hpp"

namespace facecloak {

// PNG/JPEG bridge. Everything inside the library is float RGB in [0, 1];
// OpenCV speaks 8-bit BGR, so the conversion lives here and nowhere else.

inline FaceImage from_mat(const cv::Mat& m, const std::string& what) {
  if (m.empty()) throw Error(Errc::io_error, what + ": could not decode image");
  if (m.channels() != 3 || m.depth() != CV_8U) {
    throw Error(Errc::io_error, what + ": unsupported pixel format");
  }
  FaceImage img(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      float* px = img.px(y, x);
      px[0] = row[3 * x + 2] / 255.f;
      px[1] = row[3 * x + 1] / 255.f;
      px[2] = row[3 * x + 0] / 255.f;
    }
  }
  return img;
}

inline cv::Mat to_mat(const FaceImage& img) {
  const auto q = quantize8(img);
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      const size_t i = (static_cast<size_t>(y) * img.width + x) * 3;
      row[3 * x + 0] = q[i + 2];
      row[3 * x + 1] = q[i + 1];
      row[3 * x + 2] = q[i + 0];
    }
  }
  return m;
}

inline FaceImage load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  return from_mat(m, path);
}

inline void save_png(const std::string& path, const FaceImage& img) {
  if (!cv::imwrite(path, to_mat(img))) {
    throw Error(Errc::io_error, "could not write " + path);
  }
}

inline std::vector<uint8_t> encode_png(const FaceImage& img) {
  std::vector<uint8_t> bytes;
  if (!cv::imencode(".png", to_mat(img), bytes)) {
    throw Error(Errc::io_error, "png encoding failed");
  }
  return bytes;
}

inline FaceImage decode_image(const std::vector<uint8_t>& bytes) {
  cv::Mat m = cv::imdecode(bytes, cv::IMREAD_COLOR);
  return from_mat(m, "memory buffer");
}

}  // namespace facecloak
