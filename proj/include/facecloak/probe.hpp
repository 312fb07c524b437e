#pragma once

#include <string>
#include <vector>

#include "facecloak/search.hpp"
#include "facecloak/toy_world.hpp"
#include "facecloak/verification.hpp"

namespace facecloak {

// Desk-scale transfer measurement: protect synthetic faces with all but one
// embedder as surrogates, then score impersonation on the held-out one at a
// threshold calibrated to the requested false match rate. The analogue of a
// leave-one-out evaluation across recognition backbones, runnable in seconds.

struct ProbeOptions {
  double fmr = 0.01;
  int calibration_pairs = 500;
  uint64_t seed = 424242;
  ProtectionConfig attack;  // the probe picks its own budget, independent of CLI defaults

  ProbeOptions() {
    attack.inversion_iters = 40;
    attack.attack_iters = 50;
    // More aggressive than the shipping default: the probe wants a clear
    // transfer signal in few iterations, not a subtle edit.
    attack.lr = 0.05;
  }
};

struct ProbeReport {
  int n_runs = 0;
  std::string holdout_model;
  double tau = 0;
  bool wide_confidence = false;
  double clean_psr = 0;      // pipeline output with no search, vs target
  double protected_psr = 0;  // full pipeline output, vs target
};

inline ProbeReport transferability_probe(const ToyWorld& world, int n_runs,
                                         const ProbeOptions& opt = {}) {
  if (n_runs < 20) {
    throw Error(Errc::bad_manifest, "transferability probe needs at least 20 runs");
  }
  opt.attack.validate();

  const int holdout = static_cast<int>(world.embedders.size()) - 1;
  const ToyFaceEmbedder& blackbox = world.embedders[holdout];
  const auto surrogates = world.surrogates(holdout);

  ProbeReport report;
  report.n_runs = n_runs;
  report.holdout_model = blackbox.spec().model_id;

  // Impostor threshold on the held-out model from unrelated face pairs.
  {
    Rng rng(derive_seed(opt.seed, "probe-calibration"));
    std::vector<double> d;
    d.reserve(opt.calibration_pairs);
    for (int i = 0; i < opt.calibration_pairs; ++i) {
      const ToySample a = sample_face(world, rng);
      const ToySample b = sample_face(world, rng);
      d.push_back(cosine_distance(embed_fitted(blackbox, a.image),
                                  embed_fitted(blackbox, b.image)));
    }
    const CalibrationResult cal = calibrate_threshold_detailed(std::move(d), opt.fmr);
    report.tau = cal.tau;
    report.wide_confidence = cal.wide_confidence;
  }

  Rng src_rng(derive_seed(opt.seed, "probe-sources"));
  Rng tgt_rng(derive_seed(opt.seed, "probe-targets"));
  MakeupPrompt prompt;
  prompt.t_makeup = "red lipstick";

  int clean_hits = 0;
  int protected_hits = 0;
  for (int run = 0; run < n_runs; ++run) {
    const ToySample src = sample_face(world, src_rng);
    const ToySample tgt = sample_face(world, tgt_rng);

    ProtectionConfig cfg = opt.attack;
    cfg.seed = derive_seed(opt.seed, "probe-attack") + static_cast<uint64_t>(run);

    const ProtectedFace pf = protect(world, src.image, prompt, &tgt.image, surrogates, cfg,
                                     "probe-" + std::to_string(run));

    const EmbeddingVector target_e = embed_fitted(blackbox, tgt.image);
    // The clean reference is the pipeline's own no-op output (the inversion
    // pivot rendered back), so a search that moves nothing scores identically
    // to the baseline by construction.
    const FaceImage clean = pf.inversion.weights.generate(pf.inversion.w_inv);
    const double d_clean = cosine_distance(embed_fitted(blackbox, clean), target_e);
    const double d_protected = cosine_distance(embed_fitted(blackbox, pf.image), target_e);
    clean_hits += d_clean <= report.tau;
    protected_hits += d_protected <= report.tau;
  }

  report.clean_psr = 100.0 * clean_hits / static_cast<double>(n_runs);
  report.protected_psr = 100.0 * protected_hits / static_cast<double>(n_runs);
  return report;
}

}  // namespace facecloak
