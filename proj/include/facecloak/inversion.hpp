#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "facecloak/adam.hpp"
#include "facecloak/config.hpp"
#include "facecloak/error.hpp"
#include "facecloak/image.hpp"
#include "facecloak/latent.hpp"
#include "facecloak/tape.hpp"
#include "facecloak/toy_world.hpp"

namespace facecloak {

enum class WeightProvenance { pretrained, finetuned };

struct InversionResult {
  LatentCode w_inv;
  ToyGenerator weights;  // private fine-tuned copy
  WeightProvenance provenance = WeightProvenance::pretrained;
  std::string image_id;  // which image the fine-tune is tied to
  double recon_l2 = 0;
  double recon_lpips = 0;
  double initial_objective = 0;
  double final_objective = 0;
  std::vector<double> objective_trace;  // value at the start of each iteration
};

// Mean squared error on unit-interval pixels; the L2 term of the
// reconstruction objective.
inline double pixel_mse(const FaceImage& a, const FaceImage& b) {
  if (a.height != b.height || a.width != b.width) {
    throw Error(Errc::shape_mismatch, "pixel_mse: image sizes differ");
  }
  double acc = 0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

// Fine-tunes a private copy of the generator so that G(w_inv) reproduces the
// image: minimizes perceptual(x, G(w)) + lambda2 * mse(x, G(w)) over the
// generator parameters, w_inv held fixed. Returns the best iterate seen, so
// the final objective never exceeds the initial one.
template <typename S = float>
InversionResult finetune_generator(const ToyGenerator& pretrained, const ToyLpips& lpips,
                                   const FaceImage& image, const LatentCode& w_inv,
                                   const ProtectionConfig& cfg,
                                   const std::string& image_id = "") {
  cfg.validate();
  require_shape(image, pretrained.resolution(), pretrained.resolution(), "finetune_generator");
  if (w_inv.layers != pretrained.layers() || w_inv.dim != pretrained.dim()) {
    throw Error(Errc::shape_mismatch, "finetune_generator: latent shape mismatch");
  }

  InversionResult out;
  out.w_inv = w_inv;
  out.weights = pretrained;
  out.image_id = image_id;

  const int n = pretrained.pixels();
  const int m = pretrained.latent_size();
  const auto theta0 = pretrained.theta();
  std::vector<S> wmat(theta0.begin(), theta0.begin() + static_cast<size_t>(n) * m);
  std::vector<S> bias(theta0.begin() + static_cast<size_t>(n) * m, theta0.end());
  const std::vector<S> wlat(w_inv.data.begin(), w_inv.data.end());
  const std::vector<S> target(image.data.begin(), image.data.end());

  auto objective = [&](Tape<S>& t, Var<S>& wv, Var<S>& bv) {
    wv = t.leaf(wmat);
    bv = t.leaf(bias);
    Var<S> w = t.leaf(wlat);
    Var<S> x = t.leaf(target);
    Var<S> img = pretrained.forward_theta(t, wv, bv, w);
    Var<S> lp = lpips.forward(t, img, x);
    Var<S> l2 = t.mean_sq_diff(img, x);
    return t.wsum({{lp, S(1)}, {l2, static_cast<S>(cfg.lambda2)}});
  };

  auto full_objective = [&](const ToyGenerator& g) {
    const FaceImage recon = g.generate(w_inv);
    return lpips(image, recon) + cfg.lambda2 * pixel_mse(image, recon);
  };
  out.initial_objective = full_objective(pretrained);

  Adam<S> opt_w(wmat.size(), static_cast<S>(cfg.inversion_lr), static_cast<S>(cfg.beta1),
                static_cast<S>(cfg.beta2));
  Adam<S> opt_b(bias.size(), static_cast<S>(cfg.inversion_lr), static_cast<S>(cfg.beta1),
                static_cast<S>(cfg.beta2));

  std::vector<S> best_w = wmat, best_b = bias;
  double best_obj = 0;
  bool have_best = false;

  for (int it = 0; it < cfg.inversion_iters; ++it) {
    Tape<S> t;
    Var<S> wv, bv;
    Var<S> obj = objective(t, wv, bv);
    const double val = static_cast<double>(t.scalar(obj));
    if (!std::isfinite(val)) {
      throw Error(Errc::non_finite_loss,
                  "fine-tune objective became non-finite at iteration " + std::to_string(it));
    }
    out.objective_trace.push_back(val);
    if (!have_best || val < best_obj) {
      best_obj = val;
      best_w = wmat;
      best_b = bias;
      have_best = true;
    }
    t.backward(obj);
    opt_w.step(std::span<S>(wmat), t.grad(wv));
    opt_b.step(std::span<S>(bias), t.grad(bv));
  }

  if (cfg.inversion_iters > 0) {
    // evaluate the last iterate too; keep whichever is best
    {
      Tape<S> t;
      Var<S> wv, bv;
      const double val = static_cast<double>(t.scalar(objective(t, wv, bv)));
      if (!std::isfinite(val)) throw Error(Errc::non_finite_loss, "final objective non-finite");
      if (!have_best || val < best_obj) {
        best_w = wmat;
        best_b = bias;
      }
    }
    std::vector<double> theta(theta0.size());
    for (size_t i = 0; i < best_w.size(); ++i) theta[i] = static_cast<double>(best_w[i]);
    for (size_t i = 0; i < best_b.size(); ++i)
      theta[best_w.size() + i] = static_cast<double>(best_b[i]);
    out.weights.set_theta(theta);
    out.provenance = WeightProvenance::finetuned;
    // best-iterate selection ran at optimization precision; if rounding made
    // it land above the start, keep the pretrained weights instead
    if (full_objective(out.weights) > out.initial_objective) out.weights = pretrained;
  }

  const FaceImage recon = out.weights.generate(w_inv);
  out.recon_l2 = pixel_mse(image, recon);
  out.recon_lpips = lpips(image, recon);
  out.final_objective = out.recon_lpips + cfg.lambda2 * out.recon_l2;
  return out;
}

inline FaceImage reconstruct(const InversionResult& r) { return r.weights.generate(r.w_inv); }

// Stage 1 end to end: encode, then fine-tune a private generator copy.
template <typename S = float>
InversionResult invert_image(const ToyWorld& world, const FaceImage& aligned,
                             const ProtectionConfig& cfg, const std::string& image_id = "") {
  const LatentCode w_inv = world.encoder.encode(aligned);
  return finetune_generator<S>(world.generator, world.lpips, aligned, w_inv, cfg, image_id);
}

}  // namespace facecloak
