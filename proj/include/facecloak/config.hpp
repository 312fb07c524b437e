#pragma once

#include <cstdint>
#include <string>

#include "facecloak/error.hpp"
#include "facecloak/latent.hpp"

namespace facecloak {

enum class AttackMode { impersonate_dodge, dodge_only };

inline const char* attack_mode_name(AttackMode m) {
  return m == AttackMode::dodge_only ? "dodge-only" : "impersonate+dodge";
}

inline AttackMode attack_mode_from_name(const std::string& s) {
  if (s == "dodge-only" || s == "dodge_only") return AttackMode::dodge_only;
  if (s == "impersonate+dodge" || s == "impersonate") return AttackMode::impersonate_dodge;
  throw Error(Errc::bad_manifest, "unknown attack mode: " + s);
}

struct LossWeights {
  double adv = 1.0;
  double clip = 0.5;
  double latent = 0.01;
};

struct ProtectionConfig {
  // stage 1: generator fine-tuning around the inversion pivot
  int inversion_iters = 450;
  double lambda2 = 0.5;
  double inversion_lr = 3e-4;
  // stage 2: latent search
  int attack_iters = 50;
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  // The direction term's gradient grows as 1/|image displacement|, which near
  // a faithful inversion produces spikes that linger in Adam's second-moment
  // estimate and stall the rest of the search. Rescaling the gradient to this
  // norm bounds the damage; 0 disables.
  double max_grad_norm = 1.0;
  LossWeights weights;
  IdentityMask mask;  // empty -> layer-count default at run time
  AttackMode mode = AttackMode::impersonate_dodge;
  uint64_t seed = 0;

  void validate() const {
    if (inversion_iters < 0 || attack_iters < 0) {
      throw Error(Errc::bad_manifest, "iteration counts must be >= 0");
    }
    if (lr <= 0 || inversion_lr <= 0) throw Error(Errc::bad_manifest, "learning rates must be > 0");
    if (lambda2 < 0 || weights.adv < 0 || weights.clip < 0 || weights.latent < 0) {
      throw Error(Errc::bad_manifest, "loss weights must be >= 0");
    }
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1) {
      throw Error(Errc::bad_manifest, "adam betas must lie in [0, 1)");
    }
    if (max_grad_norm < 0) throw Error(Errc::bad_manifest, "max_grad_norm must be >= 0");
  }

  IdentityMask mask_for(int layers) const {
    if (!mask.flags.empty()) {
      if (mask.layer_count() != layers) {
        throw Error(Errc::shape_mismatch, "identity mask layer count mismatch");
      }
      return mask;
    }
    return IdentityMask::default_for(layers);
  }
};

}  // namespace facecloak
