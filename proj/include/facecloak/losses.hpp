#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "facecloak/alignment.hpp"
#include "facecloak/config.hpp"
#include "facecloak/error.hpp"
#include "facecloak/image.hpp"
#include "facecloak/latent.hpp"
#include "facecloak/models.hpp"

namespace facecloak {

struct MakeupPrompt {
  std::string t_makeup;
  std::string t_src = "face";

  void validate() const {
    if (t_makeup.empty()) throw Error(Errc::empty_prompt, "makeup prompt is empty");
  }
};

struct LossBreakdown {
  double l_clip = 0;
  double l_adv = 0;
  double l_latent = 0;
  double l_total = 0;
  LossWeights weights;
  bool clip_degenerate = false;  // a displacement norm fell below the guard
};

inline LossBreakdown total_loss(double l_adv, double l_clip, double l_latent,
                                const LossWeights& w) {
  if (w.adv < 0 || w.clip < 0 || w.latent < 0) {
    throw Error(Errc::bad_manifest, "loss weights must be >= 0");
  }
  LossBreakdown b;
  b.l_adv = l_adv;
  b.l_clip = l_clip;
  b.l_latent = l_latent;
  b.weights = w;
  b.l_total = w.adv * l_adv + w.clip * l_clip + w.latent * l_latent;
  return b;
}

namespace detail {

constexpr double kDirectionGuard = 1e-8;

inline std::vector<double> embedding_delta(const EmbeddingVector& a, const EmbeddingVector& b) {
  std::vector<double> d(a.values.size());
  for (size_t i = 0; i < d.size(); ++i)
    d[i] = static_cast<double>(a.values[i]) - b.values[i];
  return d;
}

inline double guarded_cosine(const std::vector<double>& a, const std::vector<double>& b,
                             bool* degenerate) {
  double na = 0, nb = 0, dot = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] * a[i];
    nb += b[i] * b[i];
    dot += a[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (degenerate && (na < kDirectionGuard || nb < kDirectionGuard)) *degenerate = true;
  return dot / (std::max(na, kDirectionGuard) * std::max(nb, kDirectionGuard));
}

inline FaceImage fit_to(const FaceImage& img, int size) { return resize_image(img, size, size); }

}  // namespace detail

// 1 - cos(dI, dT): dT is the text-space displacement from the neutral prompt
// to the makeup prompt, dI the image-space displacement from the source image
// to the candidate. Near-zero displacements are guarded and flagged rather
// than rejected, since early optimizer iterations start at dI ~ 0.
inline double clip_directional_loss(const FaceImage& gen_image, const FaceImage& src_image,
                                    const MakeupPrompt& prompt, const VisionLanguageEncoder& vl,
                                    bool* degenerate = nullptr) {
  prompt.validate();
  if (degenerate) *degenerate = false;
  const auto dt = detail::embedding_delta(vl.embed_text(prompt.t_makeup),
                                          vl.embed_text(prompt.t_src));
  const int s = vl.image_size();
  const auto di = detail::embedding_delta(vl.embed_image(detail::fit_to(gen_image, s)),
                                          vl.embed_image(detail::fit_to(src_image, s)));
  return 1.0 - detail::guarded_cosine(di, dt, degenerate);
}

// Mean over the surrogate ensemble of D(gen, target) - D(gen, src); in
// dodge-only mode there is no target and the value is the mean of
// -D(gen, src).
inline double adversarial_loss(const FaceImage& gen_image, const FaceImage* target,
                               const FaceImage& src,
                               const std::vector<const FaceEmbedder*>& surrogates,
                               AttackMode mode = AttackMode::impersonate_dodge) {
  if (surrogates.empty()) throw Error(Errc::empty_ensemble, "no surrogate embedders");
  if (mode == AttackMode::impersonate_dodge && target == nullptr) {
    throw Error(Errc::missing_target, "impersonation requires a target image");
  }
  double acc = 0;
  for (const auto* e : surrogates) {
    const int s = e->spec().input_size;
    const auto eg = e->embed(detail::fit_to(gen_image, s));
    const auto es = e->embed(detail::fit_to(src, s));
    const double d_src = cosine_distance(eg, es);
    if (mode == AttackMode::dodge_only) {
      acc += -d_src;
    } else {
      const auto et = e->embed(detail::fit_to(*target, s));
      acc += cosine_distance(eg, et) - d_src;
    }
  }
  return acc / static_cast<double>(surrogates.size());
}

// Euclidean norm of the masked latent displacement from the inversion pivot.
inline double latent_regularizer(const LatentCode& w, const LatentCode& w_inv,
                                 const IdentityMask& mask) {
  require_same_shape(w, w_inv, "latent_regularizer");
  if (mask.layer_count() != w.layers) {
    throw Error(Errc::shape_mismatch, "latent_regularizer: mask layer count mismatch");
  }
  double acc = 0;
  for (int l = 0; l < w.layers; ++l) {
    if (!mask.flags[static_cast<size_t>(l)]) continue;
    const float* a = w.layer(l);
    const float* b = w_inv.layer(l);
    for (int j = 0; j < w.dim; ++j) {
      const double d = static_cast<double>(a[j]) - b[j];
      acc += d * d;
    }
  }
  return std::sqrt(acc);
}

}  // namespace facecloak
