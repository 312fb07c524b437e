#pragma once

#include <stdexcept>
#include <string>

namespace facecloak {

enum class Errc {
  no_face_detected,
  shape_mismatch,
  empty_prompt,
  non_finite_loss,
  missing_target,
  empty_ensemble,
  length_mismatch,
  empty_gallery,
  insufficient_pairs,
  degenerate_covariance,
  auth_error,
  rate_limited,
  timeout,
  bad_checkpoint,
  bad_manifest,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::no_face_detected: return "NoFaceDetected";
    case Errc::shape_mismatch: return "ShapeMismatch";
    case Errc::empty_prompt: return "EmptyPrompt";
    case Errc::non_finite_loss: return "NonFiniteLoss";
    case Errc::missing_target: return "MissingTarget";
    case Errc::empty_ensemble: return "EmptyEnsemble";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::empty_gallery: return "EmptyGallery";
    case Errc::insufficient_pairs: return "InsufficientPairs";
    case Errc::degenerate_covariance: return "DegenerateCovariance";
    case Errc::auth_error: return "AuthError";
    case Errc::rate_limited: return "RateLimited";
    case Errc::timeout: return "Timeout";
    case Errc::bad_checkpoint: return "BadCheckpoint";
    case Errc::bad_manifest: return "BadManifest";
    case Errc::io_error: return "IoError";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace facecloak
