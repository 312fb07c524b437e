#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "facecloak/error.hpp"
#include "facecloak/image.hpp"
#include "facecloak/latent.hpp"

namespace facecloak {

enum class Role { surrogate, blackbox_target, vision_language };

inline const char* role_name(Role r) {
  switch (r) {
    case Role::surrogate: return "surrogate";
    case Role::blackbox_target: return "blackbox-target";
    case Role::vision_language: return "vision-language";
  }
  return "?";
}

inline Role role_from_name(const std::string& s) {
  if (s == "surrogate") return Role::surrogate;
  if (s == "blackbox-target") return Role::blackbox_target;
  if (s == "vision-language") return Role::vision_language;
  throw Error(Errc::bad_manifest, "unknown role: " + s);
}

struct EmbedderSpec {
  std::string model_id;
  int input_size = 0;  // square crop edge the backbone expects
  Role role = Role::surrogate;
};

struct EmbeddingVector {
  std::vector<float> values;
  std::string model_id;

  int dim() const { return static_cast<int>(values.size()); }

  double norm() const {
    double s = 0;
    for (float v : values) s += static_cast<double>(v) * v;
    return std::sqrt(s);
  }
};

// 1 - <a, b> on unit-norm inputs; the distance every protocol speaks.
inline double cosine_distance(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dim() != b.dim()) {
    throw Error(Errc::shape_mismatch, "cosine_distance: embedding dims differ");
  }
  double dot = 0;
  for (int i = 0; i < a.dim(); ++i) dot += static_cast<double>(a.values[i]) * b.values[i];
  return 1.0 - dot;
}

// Runtime (non-differentiable) adapter surfaces. Implementations are immutable
// after construction and safe for concurrent use.

class FaceEmbedder {
 public:
  virtual ~FaceEmbedder() = default;
  virtual const EmbedderSpec& spec() const = 0;
  virtual EmbeddingVector embed(const FaceImage& img) const = 0;
};

class VisionLanguageEncoder {
 public:
  virtual ~VisionLanguageEncoder() = default;
  virtual int image_size() const = 0;
  virtual EmbeddingVector embed_text(const std::string& prompt) const = 0;
  virtual EmbeddingVector embed_image(const FaceImage& img) const = 0;
};

class Generator {
 public:
  virtual ~Generator() = default;
  virtual int layers() const = 0;
  virtual int dim() const = 0;
  virtual int resolution() const = 0;
  virtual FaceImage generate(const LatentCode& w) const = 0;
};

class LatentEncoder {
 public:
  virtual ~LatentEncoder() = default;
  virtual int input_size() const = 0;
  virtual LatentCode encode(const FaceImage& img) const = 0;
};

class PerceptualLoss {
 public:
  virtual ~PerceptualLoss() = default;
  virtual double operator()(const FaceImage& a, const FaceImage& b) const = 0;
};

}  // namespace facecloak
