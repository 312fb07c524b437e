#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "facecloak/adam.hpp"
#include "facecloak/config.hpp"
#include "facecloak/error.hpp"
#include "facecloak/inversion.hpp"
#include "facecloak/losses.hpp"
#include "facecloak/toy_world.hpp"

namespace facecloak {

// Below this displacement norm the direction term is held constant for the
// iteration (and the trace row flagged). Two regimes collapse into one guard:
// right at the pivot the displacement is pixel round-off with a meaningless
// direction, and slightly away from it the cosine's 1/|displacement| gradient
// still dwarfs every other term, so the search first has to put visible
// distance between the candidate and the source before the makeup direction
// starts steering.
constexpr double kMinDisplacementNorm = 0.03;

// Differentiable stage-2 objective with all constants (plans, reference
// embeddings, text direction) precomputed once per job. Gradients flow only
// into the latent var handed to build().
template <typename S>
struct StageTwoProblem {
  const ToyGenerator* gen = nullptr;
  std::vector<const ToyFaceEmbedder*> surrogates;
  const ToyVisionLanguage* vl = nullptr;
  AttackMode mode = AttackMode::impersonate_dodge;
  LossWeights weights;

  std::shared_ptr<const ResizePlan> to_vl;
  std::vector<std::shared_ptr<const ResizePlan>> to_fr;
  std::vector<std::vector<S>> e_src_fr, e_tgt_fr;
  std::vector<S> e_src_vl;
  std::vector<S> dt_unit;  // normalized text displacement
  std::shared_ptr<const std::vector<S>> mask_mult;
  std::vector<S> w_pivot;

  struct Nodes {
    Var<S> total, adv, clip, latent;
    bool clip_degenerate = false;
  };

  Nodes build(Tape<S>& t, Var<S> w_var) const {
    Nodes n;
    Var<S> img = gen->forward(t, w_var);

    Var<S> diff = t.sub(w_var, t.leaf(w_pivot));
    n.latent = t.norm(t.hadamard_const(diff, mask_mult), S(0));

    std::vector<std::pair<Var<S>, S>> adv_terms;
    const S inv_k = S(1) / static_cast<S>(surrogates.size());
    for (size_t k = 0; k < surrogates.size(); ++k) {
      Var<S> e = surrogates[k]->forward(t, t.resize_bilinear(img, to_fr[k]));
      Var<S> d_src = t.affine(t.dot(e, t.leaf(e_src_fr[k])), S(-1), S(1));
      if (mode == AttackMode::dodge_only) {
        adv_terms.push_back({t.affine(d_src, S(-1), S(0)), inv_k});
      } else {
        Var<S> d_tgt = t.affine(t.dot(e, t.leaf(e_tgt_fr[k])), S(-1), S(1));
        adv_terms.push_back({t.sub(d_tgt, d_src), inv_k});
      }
    }
    n.adv = t.wsum(adv_terms);

    Var<S> ei = vl->forward_image(t, t.resize_bilinear(img, to_vl));
    Var<S> di = t.sub(ei, t.leaf(e_src_vl));
    {
      double nn = 0;
      for (S v : t.val(di)) nn += static_cast<double>(v) * v;
      n.clip_degenerate = std::sqrt(nn) < kMinDisplacementNorm;
    }
    // Below the cutoff the displacement is numerical noise and its direction
    // carries no signal, while d(cos)/dw blows up as 1/|di|. Holding the term
    // constant for the iteration keeps that spike out of the optimizer's
    // moment estimates; the adversarial and latent terms still move w, so the
    // next iterate has a real displacement.
    if (n.clip_degenerate) di = t.leaf(t.val(di));
    Var<S> cos = t.dot(t.l2_normalize(di, static_cast<S>(detail::kDirectionGuard)),
                       t.leaf(dt_unit));
    n.clip = t.affine(cos, S(-1), S(1));

    n.total = t.wsum({{n.adv, static_cast<S>(weights.adv)},
                      {n.clip, static_cast<S>(weights.clip)},
                      {n.latent, static_cast<S>(weights.latent)}});
    return n;
  }
};

template <typename S>
StageTwoProblem<S> make_stage_two_problem(const ToyGenerator& finetuned,
                                          const LatentCode& w_inv, const MakeupPrompt& prompt,
                                          const FaceImage& src, const FaceImage* target,
                                          const std::vector<const ToyFaceEmbedder*>& surrogates,
                                          const ToyVisionLanguage& vl,
                                          const ProtectionConfig& cfg) {
  cfg.validate();
  prompt.validate();
  if (surrogates.empty()) throw Error(Errc::empty_ensemble, "no surrogate embedders");
  if (cfg.mode == AttackMode::impersonate_dodge && target == nullptr) {
    throw Error(Errc::missing_target, "impersonation requires a target image");
  }
  if (w_inv.layers != finetuned.layers() || w_inv.dim != finetuned.dim()) {
    throw Error(Errc::shape_mismatch, "optimize_latent: latent shape mismatch");
  }
  if (!w_inv.finite()) throw Error(Errc::non_finite_loss, "pivot latent is non-finite");
  const int res = finetuned.resolution();
  require_shape(src, res, res, "optimize_latent source");

  StageTwoProblem<S> p;
  p.gen = &finetuned;
  p.surrogates = surrogates;
  p.vl = &vl;
  p.mode = cfg.mode;
  p.weights = cfg.weights;
  p.w_pivot.assign(w_inv.data.begin(), w_inv.data.end());
  p.mask_mult = std::make_shared<const std::vector<S>>(
      cfg.mask_for(w_inv.layers).template expand<S>(w_inv.dim));

  p.to_vl = make_resize_plan(res, res, vl.image_size(), vl.image_size(), 3, true);
  for (const auto* e : surrogates) {
    const int s = e->spec().input_size;
    p.to_fr.push_back(make_resize_plan(res, res, s, s, 3, true));
    const auto es = e->embed(resize_image(src, s, s));
    p.e_src_fr.emplace_back(es.values.begin(), es.values.end());
    if (target) {
      const auto et = e->embed(resize_image(*target, s, s));
      p.e_tgt_fr.emplace_back(et.values.begin(), et.values.end());
    } else {
      p.e_tgt_fr.emplace_back();
    }
  }

  const auto esv = vl.embed_image(resize_image(src, vl.image_size(), vl.image_size()));
  p.e_src_vl.assign(esv.values.begin(), esv.values.end());

  const auto dt = detail::embedding_delta(vl.embed_text(prompt.t_makeup),
                                          vl.embed_text(prompt.t_src));
  double ndt = 0;
  for (double v : dt) ndt += v * v;
  ndt = std::max(std::sqrt(ndt), detail::kDirectionGuard);
  p.dt_unit.resize(dt.size());
  for (size_t i = 0; i < dt.size(); ++i) p.dt_unit[i] = static_cast<S>(dt[i] / ndt);
  return p;
}

struct OptimizeOutcome {
  LatentCode w_final;
  std::vector<LossBreakdown> trace;   // values at the latent logged in w_log
  std::vector<LatentCode> w_log;      // latent at the start of each iteration
  LatentCode w_best;                  // lowest-l_total iterate (informational)
  double best_total = std::numeric_limits<double>::infinity();
  int best_iteration = -1;
};

// Masked Adam descent on the combined objective. Layers the mask freezes are
// never written, so they remain bitwise at the pivot. Returns the final
// iterate per the fixed-iteration protocol; the best iterate is logged.
template <typename S = float>
OptimizeOutcome optimize_latent(const ToyGenerator& finetuned, const LatentCode& w_inv,
                                const MakeupPrompt& prompt, const FaceImage& src,
                                const FaceImage* target,
                                const std::vector<const ToyFaceEmbedder*>& surrogates,
                                const ToyVisionLanguage& vl, const ProtectionConfig& cfg) {
  const StageTwoProblem<S> problem =
      make_stage_two_problem<S>(finetuned, w_inv, prompt, src, target, surrogates, vl, cfg);

  OptimizeOutcome out;
  if (cfg.attack_iters == 0) {
    out.w_final = w_inv;
    return out;
  }

  std::vector<S> w(w_inv.data.begin(), w_inv.data.end());
  const std::vector<S>& freeze = *problem.mask_mult;
  Adam<S> adam(w.size(), static_cast<S>(cfg.lr), static_cast<S>(cfg.beta1),
               static_cast<S>(cfg.beta2));

  auto snapshot = [&]() {
    LatentCode c(w_inv.layers, w_inv.dim);
    for (size_t i = 0; i < w.size(); ++i) c.data[i] = static_cast<float>(w[i]);
    return c;
  };

  for (int it = 0; it < cfg.attack_iters; ++it) {
    Tape<S> t;
    Var<S> w_var = t.leaf(w);
    auto nodes = problem.build(t, w_var);
    LossBreakdown b = total_loss(t.scalar(nodes.adv), t.scalar(nodes.clip),
                                 t.scalar(nodes.latent), cfg.weights);
    b.clip_degenerate = nodes.clip_degenerate;
    if (!std::isfinite(b.l_total)) {
      throw Error(Errc::non_finite_loss,
                  "objective became non-finite at iteration " + std::to_string(it));
    }
    out.w_log.push_back(snapshot());
    out.trace.push_back(b);
    if (b.l_total < out.best_total) {
      out.best_total = b.l_total;
      out.best_iteration = it;
      out.w_best = out.w_log.back();
    }
    t.backward(nodes.total);
    auto graw = t.grad(w_var);
    std::vector<S> g(graw.begin(), graw.end());
    if (cfg.max_grad_norm > 0) {
      double nn = 0;
      for (size_t i = 0; i < g.size(); ++i) {
        if (freeze[i] != S(0)) nn += static_cast<double>(g[i]) * g[i];
      }
      nn = std::sqrt(nn);
      if (nn > cfg.max_grad_norm) {
        const S scale = static_cast<S>(cfg.max_grad_norm / nn);
        for (auto& v : g) v *= scale;
      }
    }
    adam.step(std::span<S>(w), g, &freeze);
  }

  out.w_final = snapshot();
  // frozen coordinates are untouched by construction; restore them from the
  // pivot anyway so the bitwise guarantee is independent of scalar type
  for (size_t i = 0; i < w.size(); ++i) {
    if (freeze[i] == S(0)) out.w_final.data[i] = w_inv.data[i];
  }
  return out;
}

struct ProtectedFace {
  FaceImage image;
  LatentCode w_final;
  std::vector<LossBreakdown> trace;
  ProtectionConfig config;
  MakeupPrompt prompt;
  std::string target_id;

  InversionResult inversion;
  std::vector<LatentCode> w_log;
  LatentCode w_best;
  double best_total = std::numeric_limits<double>::infinity();
  int best_iteration = -1;
  bool was_aligned = false;
  AlignmentRecord alignment;
};

// Accepts either a raw frame with landmark markers or an image already at the
// generator's working size.
inline AlignedFace ensure_aligned(const FaceImage& image, int resolution, bool* did_align) {
  try {
    AlignedFace a = align_face(image, resolution);
    if (did_align) *did_align = true;
    return a;
  } catch (const Error& e) {
    if (e.code() == Errc::no_face_detected && image.height == resolution &&
        image.width == resolution) {
      if (did_align) *did_align = false;
      AlignedFace a;
      a.image = image;
      a.record.source_width = image.width;
      a.record.source_height = image.height;
      return a;
    }
    throw;
  }
}

// The whole two-stage pipeline: align, encode, fine-tune the generator around
// the pivot, then search the latent neighborhood for the protected face.
template <typename S = float>
ProtectedFace protect(const ToyWorld& world, const FaceImage& image, const MakeupPrompt& prompt,
                      const FaceImage* target,
                      const std::vector<const ToyFaceEmbedder*>& surrogates,
                      const ProtectionConfig& cfg, const std::string& image_id = "",
                      const std::string& target_id = "") {
  cfg.validate();
  prompt.validate();
  const int res = world.generator.resolution();

  ProtectedFace out;
  out.config = cfg;
  out.prompt = prompt;
  out.target_id = target_id;

  AlignedFace aligned = ensure_aligned(image, res, &out.was_aligned);
  out.alignment = aligned.record;

  FaceImage target_aligned;
  if (target) target_aligned = ensure_aligned(*target, res, nullptr).image;

  out.inversion = invert_image<S>(world, aligned.image, cfg, image_id);

  OptimizeOutcome o =
      optimize_latent<S>(out.inversion.weights, out.inversion.w_inv, prompt, aligned.image,
                         target ? &target_aligned : nullptr, surrogates, world.vl, cfg);
  out.w_final = std::move(o.w_final);
  out.trace = std::move(o.trace);
  out.w_log = std::move(o.w_log);
  out.w_best = std::move(o.w_best);
  out.best_total = o.best_total;
  out.best_iteration = o.best_iteration;

  out.image = out.inversion.weights.generate(out.w_final);
  return out;
}

}  // namespace facecloak
