#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "facecloak/image.hpp"

namespace facecloak {

// Image quality metrics, computed on 8-bit quantized pixels: that is the
// representation a verification service or a viewer actually receives, and it
// keeps scores comparable with published numbers.

inline double psnr(const FaceImage& a, const FaceImage& b) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(Errc::shape_mismatch, "psnr: image sizes differ");
  }
  const auto qa = quantize8(a);
  const auto qb = quantize8(b);
  double mse = 0;
  for (size_t i = 0; i < qa.size(); ++i) {
    const double d = static_cast<double>(qa[i]) - static_cast<double>(qb[i]);
    mse += d * d;
  }
  mse /= static_cast<double>(qa.size());
  if (mse <= 0) return 100.0;  // identical after quantization
  return std::min(100.0, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace detail {

inline std::vector<double> gaussian_window(int radius, double sigma) {
  std::vector<double> w(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    w[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    sum += w[i + radius];
  }
  for (auto& v : w) v /= sum;
  return w;
}

// Separable Gaussian filter; only positions where the window fits entirely
// inside the image are produced (valid region, (h-2r) x (w-2r)).
inline std::vector<double> filter_valid(const std::vector<double>& plane, int h, int w,
                                        const std::vector<double>& win) {
  const int r = static_cast<int>(win.size() / 2);
  const int ow = w - 2 * r;
  const int oh = h - 2 * r;
  std::vector<double> rows(static_cast<size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < static_cast<int>(win.size()); ++k) {
        acc += win[k] * plane[static_cast<size_t>(y) * w + x + k];
      }
      rows[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0;
      for (int k = 0; k < static_cast<int>(win.size()); ++k) {
        acc += win[k] * rows[static_cast<size_t>(y + k) * ow + x];
      }
      out[static_cast<size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace detail

// Mean structural similarity over an 11x11 Gaussian window (sigma 1.5),
// averaged across the valid region of all three channels. The window shrinks
// to the largest odd size that fits when the image is smaller than 11 pixels.
inline double ssim(const FaceImage& a, const FaceImage& b) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(Errc::shape_mismatch, "ssim: image sizes differ");
  }
  const int h = a.height, w = a.width;
  int win = std::min({11, h, w});
  if (win % 2 == 0) --win;
  const int r = win / 2;
  const auto g = detail::gaussian_window(r, 1.5);

  const auto qa = quantize8(a);
  const auto qb = quantize8(b);
  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);

  const size_t n = static_cast<size_t>(h) * w;
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  double total = 0;
  size_t count = 0;
  for (int c = 0; c < 3; ++c) {
    for (size_t i = 0; i < n; ++i) {
      const double va = qa[i * 3 + c];
      const double vb = qb[i * 3 + c];
      pa[i] = va;
      pb[i] = vb;
      paa[i] = va * va;
      pbb[i] = vb * vb;
      pab[i] = va * vb;
    }
    const auto ma = detail::filter_valid(pa, h, w, g);
    const auto mb = detail::filter_valid(pb, h, w, g);
    const auto maa = detail::filter_valid(paa, h, w, g);
    const auto mbb = detail::filter_valid(pbb, h, w, g);
    const auto mab = detail::filter_valid(pab, h, w, g);
    for (size_t i = 0; i < ma.size(); ++i) {
      const double va = maa[i] - ma[i] * ma[i];
      const double vb = mbb[i] - mb[i] * mb[i];
      const double vab = mab[i] - ma[i] * mb[i];
      const double num = (2 * ma[i] * mb[i] + c1) * (2 * vab + c2);
      const double den = (ma[i] * ma[i] + mb[i] * mb[i] + c1) * (va + vb + c2);
      total += num / den;
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

}  // namespace facecloak
