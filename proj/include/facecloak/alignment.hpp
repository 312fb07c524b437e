#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "facecloak/error.hpp"
#include "facecloak/image.hpp"
#include "facecloak/resample.hpp"

namespace facecloak {

using Landmarks = std::array<std::array<float, 2>, 5>;

// Canonical 5-point layout (left eye, right eye, nose, mouth corners) for a
// 112x112 crop; scaled linearly for other crop sizes.
inline Landmarks canonical_landmarks(int crop_size) {
  Landmarks base = {{{38.2946f, 51.6963f},
                     {73.5318f, 51.5014f},
                     {56.0252f, 71.7366f},
                     {41.5493f, 92.3655f},
                     {70.7299f, 92.2041f}}};
  const float s = crop_size / 112.f;
  for (auto& p : base) {
    p[0] *= s;
    p[1] *= s;
  }
  return base;
}

// Non-reflective similarity x -> [a -b; b a] x + (tx, ty).
struct Similarity {
  float a = 1.f, b = 0.f, tx = 0.f, ty = 0.f;

  std::array<float, 2> apply(float x, float y) const {
    return {a * x - b * y + tx, b * x + a * y + ty};
  }

  float scale() const { return std::sqrt(a * a + b * b); }

  // inv(p) = R^-1 (p - t)
  Similarity inverse() const {
    const float s2 = a * a + b * b;
    Similarity inv;
    inv.a = a / s2;
    inv.b = -b / s2;
    inv.tx = (a * -tx + b * -ty) / s2;
    inv.ty = (-b * -tx + a * -ty) / s2;
    return inv;
  }
};

// Least-squares similarity mapping src points onto dst points.
inline Similarity fit_similarity(const Landmarks& src, const Landmarks& dst) {
  double sx = 0, sy = 0, dx = 0, dy = 0;
  const int n = 5;
  for (int i = 0; i < n; ++i) {
    sx += src[i][0];
    sy += src[i][1];
    dx += dst[i][0];
    dy += dst[i][1];
  }
  sx /= n; sy /= n; dx /= n; dy /= n;
  double num_a = 0, num_b = 0, den = 0;
  for (int i = 0; i < n; ++i) {
    const double px = src[i][0] - sx, py = src[i][1] - sy;
    const double qx = dst[i][0] - dx, qy = dst[i][1] - dy;
    num_a += px * qx + py * qy;
    num_b += px * qy - py * qx;
    den += px * px + py * py;
  }
  if (den < 1e-12) throw Error(Errc::no_face_detected, "degenerate landmark configuration");
  Similarity s;
  s.a = static_cast<float>(num_a / den);
  s.b = static_cast<float>(num_b / den);
  s.tx = static_cast<float>(dx - (s.a * sx - s.b * sy));
  s.ty = static_cast<float>(dy - (s.b * sx + s.a * sy));
  return s;
}

inline float bilinear_sample(const FaceImage& img, float x, float y, int c) {
  x = std::clamp(x, 0.f, static_cast<float>(img.width - 1));
  y = std::clamp(y, 0.f, static_cast<float>(img.height - 1));
  const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const float fx = x - x0, fy = y - y0;
  const float v00 = img.px(y0, x0)[c], v01 = img.px(y0, x1)[c];
  const float v10 = img.px(y1, x0)[c], v11 = img.px(y1, x1)[c];
  return (v00 * (1 - fx) + v01 * fx) * (1 - fy) + (v10 * (1 - fx) + v11 * fx) * fy;
}

// Resamples the source through the inverse of `fwd` (src -> output coords).
inline FaceImage warp_similarity(const FaceImage& img, const Similarity& fwd, int out_h,
                                 int out_w) {
  const Similarity inv = fwd.inverse();
  FaceImage out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x) {
      const auto s = inv.apply(static_cast<float>(x), static_cast<float>(y));
      float* p = out.px(y, x);
      for (int c = 0; c < 3; ++c) p[c] = bilinear_sample(img, s[0], s[1], c);
    }
  return out;
}

// Antialiased separable resize of a whole image (non-differentiable path).
inline FaceImage resize_image(const FaceImage& img, int out_h, int out_w) {
  if (img.height == out_h && img.width == out_w) return img;
  auto plan = make_resize_plan(img.height, img.width, out_h, out_w, 3, true);
  FaceImage out(out_h, out_w);
  resize_forward(*plan, img.data.data(), out.data.data());
  return out;
}

namespace detail {

// Markers are stamped as exactly pure magenta, which the generator cannot
// produce; detection seeds on near-exact purity and refines the position with
// an intensity-weighted centroid so warped (resampled) markers are still
// located to sub-pixel accuracy.
inline bool is_marker_seed(const float* p) {
  return p[0] >= 0.99f && p[1] <= 0.01f && p[2] >= 0.99f;
}

struct Cluster {
  double cx = 0, cy = 0;
  int count = 0;
};

// Connected components (8-neighborhood) of seed pixels; the centroid of the
// surviving pure core locates a marker to within half a pixel even after the
// image has been resampled once.
inline std::vector<Cluster> marker_components(const FaceImage& img) {
  std::vector<uint8_t> seen(img.pixels(), 0);
  std::vector<Cluster> out;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const size_t idx = static_cast<size_t>(y) * img.width + x;
      if (seen[idx] || !is_marker_seed(img.px(y, x))) continue;
      Cluster c;
      std::queue<std::pair<int, int>> q;
      q.push({y, x});
      seen[idx] = 1;
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        c.cx += cx;
        c.cy += cy;
        c.count++;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int ny = cy + dy, nx = cx + dx;
            if (ny < 0 || nx < 0 || ny >= img.height || nx >= img.width) continue;
            const size_t nidx = static_cast<size_t>(ny) * img.width + nx;
            if (seen[nidx] || !is_marker_seed(img.px(ny, nx))) continue;
            seen[nidx] = 1;
            q.push({ny, nx});
          }
      }
      c.cx /= c.count;
      c.cy /= c.count;
      out.push_back(c);
    }
  return out;
}

}  // namespace detail

// Groups 5-marker sets into faces and orders each set as
// (left eye, right eye, nose, left mouth, right mouth) by geometry.
inline std::vector<Landmarks> detect_marker_faces(const FaceImage& img) {
  auto comps = detail::marker_components(img);
  const size_t n = comps.size();
  if (n == 0 || n % 5 != 0) {
    if (n == 0) throw Error(Errc::no_face_detected, "no landmark markers found");
    throw Error(Errc::no_face_detected,
                "marker count " + std::to_string(n) + " is not a multiple of 5");
  }
  const size_t k = n / 5;

  // Single-linkage agglomeration down to k groups.
  std::vector<int> group(n);
  for (size_t i = 0; i < n; ++i) group[i] = static_cast<int>(i);
  auto find = [&](int i) {
    while (group[i] != i) i = group[i] = group[group[i]];
    return i;
  };
  struct Edge {
    double d;
    int i, j;
  };
  std::vector<Edge> edges;
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) {
      const double dx = comps[i].cx - comps[j].cx, dy = comps[i].cy - comps[j].cy;
      edges.push_back({dx * dx + dy * dy, static_cast<int>(i), static_cast<int>(j)});
    }
  std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    if (a.d != b.d) return a.d < b.d;
    return std::tie(a.i, a.j) < std::tie(b.i, b.j);
  });
  size_t groups = n;
  for (const auto& e : edges) {
    if (groups == k) break;
    const int a = find(e.i), b = find(e.j);
    if (a != b) {
      group[std::max(a, b)] = std::min(a, b);
      --groups;
    }
  }

  std::vector<std::vector<int>> members;
  std::vector<int> root_of;
  for (size_t i = 0; i < n; ++i) {
    const int r = find(static_cast<int>(i));
    auto it = std::find(root_of.begin(), root_of.end(), r);
    size_t gi;
    if (it == root_of.end()) {
      root_of.push_back(r);
      members.emplace_back();
      gi = members.size() - 1;
    } else {
      gi = static_cast<size_t>(it - root_of.begin());
    }
    members[gi].push_back(static_cast<int>(i));
  }
  std::vector<Landmarks> faces;
  for (auto& m : members) {
    if (m.size() != 5) {
      throw Error(Errc::no_face_detected, "marker grouping is not 5 per face");
    }
    std::sort(m.begin(), m.end(),
              [&](int a, int b) { return comps[a].cy < comps[b].cy; });
    // top two = eyes, bottom two = mouth corners, middle = nose
    auto by_x = [&](int a, int b) { return comps[a].cx < comps[b].cx; };
    if (!by_x(m[0], m[1])) std::swap(m[0], m[1]);
    if (!by_x(m[3], m[4])) std::swap(m[3], m[4]);
    Landmarks lm;
    const int order[5] = {m[0], m[1], m[2], m[3], m[4]};
    for (int i = 0; i < 5; ++i) {
      lm[i][0] = static_cast<float>(comps[order[i]].cx);
      lm[i][1] = static_cast<float>(comps[order[i]].cy);
    }
    faces.push_back(lm);
  }
  return faces;
}

inline float landmark_bbox_area(const Landmarks& lm) {
  float x0 = lm[0][0], x1 = lm[0][0], y0 = lm[0][1], y1 = lm[0][1];
  for (const auto& p : lm) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  return (x1 - x0) * (y1 - y0);
}

inline AlignedFace align_face_with_landmarks(const FaceImage& img, const Landmarks& lm,
                                             int crop_size) {
  Landmarks src = lm;
  // Landmark jitter below marker-localization accuracy (about a pixel)
  // carries no alignment information; an image whose landmarks already sit on
  // the template is passed through unchanged, which also makes repeated
  // alignment exact rather than accumulating resampling blur.
  if (img.width == crop_size && img.height == crop_size) {
    const Landmarks canon = canonical_landmarks(crop_size);
    bool close = true;
    for (int i = 0; i < 5 && close; ++i) {
      close = std::abs(src[i][0] - canon[i][0]) <= 1.f &&
              std::abs(src[i][1] - canon[i][1]) <= 1.f;
    }
    if (close) src = canon;
  }
  const Similarity fwd = fit_similarity(src, canonical_landmarks(crop_size));
  AlignedFace out;
  out.image = warp_similarity(img, fwd, crop_size, crop_size);
  out.record.landmarks = lm;
  out.record.similarity = {fwd.a, fwd.b, fwd.tx, fwd.ty};
  out.record.source_width = img.width;
  out.record.source_height = img.height;
  return out;
}

// Detects marker landmarks, picks the largest face if several are present,
// and resamples it onto the canonical crop.
inline AlignedFace align_face(const FaceImage& img, int crop_size = 112) {
  auto faces = detect_marker_faces(img);
  size_t best = 0;
  for (size_t i = 1; i < faces.size(); ++i) {
    if (landmark_bbox_area(faces[i]) > landmark_bbox_area(faces[best])) best = i;
  }
  return align_face_with_landmarks(img, faces[best], crop_size);
}

// Stamps a small marker block; used when synthesizing inputs for the
// detection path.
inline void stamp_marker(FaceImage& img, float cx, float cy, int radius = 1) {
  const int x0 = std::max(0, static_cast<int>(std::lround(cx)) - radius);
  const int x1 = std::min(img.width - 1, static_cast<int>(std::lround(cx)) + radius);
  const int y0 = std::max(0, static_cast<int>(std::lround(cy)) - radius);
  const int y1 = std::min(img.height - 1, static_cast<int>(std::lround(cy)) + radius);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      float* p = img.px(y, x);
      p[0] = 1.f;
      p[1] = 0.f;
      p[2] = 1.f;
    }
}

inline void stamp_landmarks(FaceImage& img, const Landmarks& lm, int radius = 1) {
  for (const auto& p : lm) stamp_marker(img, p[0], p[1], radius);
}

}  // namespace facecloak
