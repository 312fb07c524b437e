#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

namespace facecloak {

// Separable triangle-filter resampling along one axis. When downscaling with
// antialiasing the filter support widens with the scale factor, which matches
// the behaviour of the usual image libraries; upscaling reduces to plain
// bilinear interpolation. The plan is a sparse linear map, so its transpose
// serves as the exact backward pass.
struct ResamplePlan1D {
  struct Tap {
    int lo = 0;                  // first source index
    std::vector<double> w;       // weights, sum to 1
  };
  int in = 0;
  int out = 0;
  std::vector<Tap> taps;         // one per output index
};

inline ResamplePlan1D make_resample_plan(int in, int out, bool antialias) {
  ResamplePlan1D plan;
  plan.in = in;
  plan.out = out;
  plan.taps.resize(static_cast<size_t>(out));
  const double scale = static_cast<double>(in) / out;
  const double fscale = (antialias && scale > 1.0) ? scale : 1.0;
  const double support = fscale;  // triangle kernel half-width
  for (int j = 0; j < out; ++j) {
    const double center = (j + 0.5) * scale;
    int lo = static_cast<int>(std::floor(center - support + 0.5));
    int hi = static_cast<int>(std::floor(center + support + 0.5));  // exclusive
    lo = std::max(lo, 0);
    hi = std::min(hi, in);
    auto& tap = plan.taps[static_cast<size_t>(j)];
    tap.lo = lo;
    tap.w.resize(static_cast<size_t>(std::max(hi - lo, 0)));
    double sum = 0.0;
    for (int k = lo; k < hi; ++k) {
      double t = std::abs((k + 0.5 - center) / fscale);
      double w = t < 1.0 ? 1.0 - t : 0.0;
      tap.w[static_cast<size_t>(k - lo)] = w;
      sum += w;
    }
    if (sum <= 0.0) {  // degenerate window, fall back to nearest
      int k = std::clamp(static_cast<int>(center), 0, in - 1);
      tap.lo = k;
      tap.w.assign(1, 1.0);
      continue;
    }
    for (auto& w : tap.w) w /= sum;
    // trim zero-weight edges so identity plans are exactly one tap
    while (!tap.w.empty() && tap.w.back() == 0.0) tap.w.pop_back();
    while (!tap.w.empty() && tap.w.front() == 0.0) {
      tap.w.erase(tap.w.begin());
      ++tap.lo;
    }
  }
  return plan;
}

// Precomputed two-axis plan for HxWxC interleaved images.
struct ResizePlan {
  int in_h = 0, in_w = 0, out_h = 0, out_w = 0, channels = 0;
  ResamplePlan1D rows;  // in_h -> out_h
  ResamplePlan1D cols;  // in_w -> out_w
};

inline std::shared_ptr<const ResizePlan> make_resize_plan(int in_h, int in_w, int out_h,
                                                          int out_w, int channels,
                                                          bool antialias) {
  auto plan = std::make_shared<ResizePlan>();
  plan->in_h = in_h;
  plan->in_w = in_w;
  plan->out_h = out_h;
  plan->out_w = out_w;
  plan->channels = channels;
  plan->rows = make_resample_plan(in_h, out_h, antialias);
  plan->cols = make_resample_plan(in_w, out_w, antialias);
  return plan;
}

// y[out_h][in_w][C] <- rows pass, then y2[out_h][out_w][C] <- cols pass.
template <typename S>
void resize_forward(const ResizePlan& p, const S* src, S* dst) {
  const int c = p.channels;
  std::vector<S> tmp(static_cast<size_t>(p.out_h) * p.in_w * c, S(0));
  for (int oy = 0; oy < p.out_h; ++oy) {
    const auto& tap = p.rows.taps[static_cast<size_t>(oy)];
    for (size_t t = 0; t < tap.w.size(); ++t) {
      const S w = static_cast<S>(tap.w[t]);
      const S* srow = src + (static_cast<size_t>(tap.lo + t) * p.in_w) * c;
      S* drow = tmp.data() + (static_cast<size_t>(oy) * p.in_w) * c;
      for (int i = 0; i < p.in_w * c; ++i) drow[i] += w * srow[i];
    }
  }
  std::fill(dst, dst + static_cast<size_t>(p.out_h) * p.out_w * c, S(0));
  for (int ox = 0; ox < p.out_w; ++ox) {
    const auto& tap = p.cols.taps[static_cast<size_t>(ox)];
    for (size_t t = 0; t < tap.w.size(); ++t) {
      const S w = static_cast<S>(tap.w[t]);
      for (int oy = 0; oy < p.out_h; ++oy) {
        const S* spx = tmp.data() + (static_cast<size_t>(oy) * p.in_w + tap.lo + t) * c;
        S* dpx = dst + (static_cast<size_t>(oy) * p.out_w + ox) * c;
        for (int ch = 0; ch < c; ++ch) dpx[ch] += w * spx[ch];
      }
    }
  }
}

// Transpose of resize_forward: scatters output adjoints back to the source.
template <typename S>
void resize_backward(const ResizePlan& p, const S* dst_adj, S* src_adj) {
  const int c = p.channels;
  std::vector<S> tmp(static_cast<size_t>(p.out_h) * p.in_w * c, S(0));
  for (int ox = 0; ox < p.out_w; ++ox) {
    const auto& tap = p.cols.taps[static_cast<size_t>(ox)];
    for (size_t t = 0; t < tap.w.size(); ++t) {
      const S w = static_cast<S>(tap.w[t]);
      for (int oy = 0; oy < p.out_h; ++oy) {
        const S* dpx = dst_adj + (static_cast<size_t>(oy) * p.out_w + ox) * c;
        S* spx = tmp.data() + (static_cast<size_t>(oy) * p.in_w + tap.lo + t) * c;
        for (int ch = 0; ch < c; ++ch) spx[ch] += w * dpx[ch];
      }
    }
  }
  for (int oy = 0; oy < p.out_h; ++oy) {
    const auto& tap = p.rows.taps[static_cast<size_t>(oy)];
    for (size_t t = 0; t < tap.w.size(); ++t) {
      const S w = static_cast<S>(tap.w[t]);
      const S* srow = tmp.data() + (static_cast<size_t>(oy) * p.in_w) * c;
      S* drow = src_adj + (static_cast<size_t>(tap.lo + t) * p.in_w) * c;
      for (int i = 0; i < p.in_w * c; ++i) drow[i] += w * srow[i];
    }
  }
}

}  // namespace facecloak
