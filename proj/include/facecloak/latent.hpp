#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "facecloak/error.hpp"

namespace facecloak {

// Per-layer latent stack: layers x dim, row-major. The "w" of the pipeline.
struct LatentCode {
  int layers = 0;
  int dim = 0;
  std::vector<float> data;

  LatentCode() = default;
  LatentCode(int l, int d) : layers(l), dim(d), data(static_cast<size_t>(l) * d, 0.f) {}

  size_t size() const { return data.size(); }
  float* layer(int l) { return data.data() + static_cast<size_t>(l) * dim; }
  const float* layer(int l) const { return data.data() + static_cast<size_t>(l) * dim; }

  bool same_shape(const LatentCode& o) const { return layers == o.layers && dim == o.dim; }

  bool finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require_same_shape(const LatentCode& a, const LatentCode& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw Error(Errc::shape_mismatch, what + ": latent shapes differ (" +
                                          std::to_string(a.layers) + "x" + std::to_string(a.dim) +
                                          " vs " + std::to_string(b.layers) + "x" +
                                          std::to_string(b.dim) + ")");
  }
}

// Per-layer binary flags choosing which layers the optimizer may touch.
// 1 = free to move (and regularized), 0 = frozen at the inversion pivot.
struct IdentityMask {
  std::vector<uint8_t> flags;  // length = layers

  static IdentityMask all(int layers, uint8_t value) {
    IdentityMask m;
    m.flags.assign(static_cast<size_t>(layers), value);
    return m;
  }

  // Free layers start at `first_free_layer` (1-based, inclusive). The default
  // boundary for an 18-layer stack is 8; it scales proportionally for other
  // depths.
  static IdentityMask default_for(int layers, int reference_layers = 18,
                                  int reference_boundary = 8) {
    IdentityMask m = all(layers, 0);
    const int frozen_ref = reference_boundary - 1;  // layers 1..7
    int frozen = static_cast<int>(
        std::lround(static_cast<double>(frozen_ref) * layers / reference_layers));
    frozen = std::max(0, std::min(frozen, layers - 1));
    for (int l = frozen; l < layers; ++l) m.flags[static_cast<size_t>(l)] = 1;
    return m;
  }

  int layer_count() const { return static_cast<int>(flags.size()); }

  bool any_free() const {
    for (auto f : flags)
      if (f) return true;
    return false;
  }

  // Expands per-layer flags to per-coordinate multipliers.
  template <typename S>
  std::vector<S> expand(int dim) const {
    std::vector<S> out(flags.size() * static_cast<size_t>(dim));
    for (size_t l = 0; l < flags.size(); ++l)
      for (int j = 0; j < dim; ++j) out[l * dim + j] = static_cast<S>(flags[l]);
    return out;
  }
};

}  // namespace facecloak
