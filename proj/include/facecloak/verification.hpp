#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "facecloak/alignment.hpp"
#include "facecloak/models.hpp"

namespace facecloak {

enum class VerifyMode { impersonation, dodging };

inline const char* verify_mode_name(VerifyMode m) {
  return m == VerifyMode::impersonation ? "impersonation" : "dodging";
}

// A verification decision rule: faces match when their embedding distance is
// at most tau on the named model.
struct VerificationProtocol {
  std::string model_id;
  double tau = 0;
  VerifyMode mode = VerifyMode::impersonation;

  void validate() const {
    if (!(tau > 0.0 && tau < 2.0)) {
      throw Error(Errc::bad_manifest, "verification threshold must lie in (0, 2)");
    }
  }
};

// Published 1% false-match-rate thresholds for the common recognition
// backbones; the fallback when no calibration pairs are supplied.
inline double default_threshold(const std::string& model_id) {
  if (model_id == "IRSE50") return 0.241;
  if (model_id == "IR152") return 0.167;
  if (model_id == "FaceNet") return 0.409;
  if (model_id == "MobileFace") return 0.302;
  throw Error(Errc::bad_manifest, "no default verification threshold for " + model_id);
}

inline EmbeddingVector embed_fitted(const FaceEmbedder& model, const FaceImage& img) {
  const int n = model.spec().input_size;
  if (img.height == n && img.width == n) return model.embed(img);
  return model.embed(resize_image(img, n, n));
}

struct CalibrationResult {
  double tau = 0;
  int pairs = 0;
  int false_matches = 0;       // impostor distances <= tau, recounted
  bool wide_confidence = false;  // too few pairs to resolve the requested rate
};

// Largest threshold whose impostor acceptance stays within the requested
// false match rate: the floor(fmr*n)-th order statistic, stepped just below
// any tie cluster that would spill past the budget.
inline CalibrationResult calibrate_threshold_detailed(std::vector<double> distances,
                                                      double fmr = 0.01) {
  if (distances.empty()) {
    throw Error(Errc::insufficient_pairs, "no impostor distances to calibrate on");
  }
  if (!(fmr >= 0.0 && fmr < 1.0)) {
    throw Error(Errc::bad_manifest, "false match rate must lie in [0, 1)");
  }
  for (double v : distances) {
    if (!std::isfinite(v)) {
      throw Error(Errc::non_finite_loss, "non-finite impostor distance");
    }
  }
  std::sort(distances.begin(), distances.end());

  CalibrationResult r;
  r.pairs = static_cast<int>(distances.size());
  r.wide_confidence =
      fmr > 0.0 && r.pairs < static_cast<int>(std::ceil(1.0 / fmr));

  const int allowed = static_cast<int>(std::floor(fmr * r.pairs));
  const double down = -std::numeric_limits<double>::infinity();
  if (allowed == 0) {
    r.tau = std::nextafter(distances.front(), down);
  } else {
    r.tau = distances[allowed - 1];
    const auto past = std::upper_bound(distances.begin(), distances.end(), r.tau);
    if (past - distances.begin() > allowed) {
      r.tau = std::nextafter(r.tau, down);
    }
  }
  r.false_matches = static_cast<int>(
      std::upper_bound(distances.begin(), distances.end(), r.tau) - distances.begin());
  return r;
}

inline double calibrate_threshold(std::vector<double> distances, double fmr = 0.01) {
  return calibrate_threshold_detailed(std::move(distances), fmr).tau;
}

inline CalibrationResult calibrate_threshold(
    const std::vector<std::pair<FaceImage, FaceImage>>& impostor_pairs,
    const FaceEmbedder& model, double fmr = 0.01) {
  std::vector<double> d;
  d.reserve(impostor_pairs.size());
  for (const auto& [x, y] : impostor_pairs) {
    d.push_back(cosine_distance(embed_fitted(model, x), embed_fitted(model, y)));
  }
  return calibrate_threshold_detailed(std::move(d), fmr);
}

// Protection success rate over precomputed pair distances, in percent.
// Impersonation succeeds when the protected face matches the target;
// dodging succeeds when it no longer matches its own reference image.
inline double verification_psr_from_distances(const std::vector<double>& distances,
                                              const VerificationProtocol& protocol) {
  protocol.validate();
  if (distances.empty()) {
    throw Error(Errc::length_mismatch, "no pairs to score");
  }
  int hits = 0;
  for (double d : distances) {
    const bool match = d <= protocol.tau;
    hits += (protocol.mode == VerifyMode::impersonation) ? match : !match;
  }
  return 100.0 * hits / static_cast<double>(distances.size());
}

inline double verification_psr(const std::vector<FaceImage>& protected_faces,
                               const std::vector<FaceImage>& references,
                               const VerificationProtocol& protocol,
                               const FaceEmbedder& model) {
  if (protected_faces.size() != references.size()) {
    throw Error(Errc::length_mismatch, "protected and reference lists differ in length");
  }
  std::vector<double> d;
  d.reserve(protected_faces.size());
  for (size_t i = 0; i < protected_faces.size(); ++i) {
    d.push_back(cosine_distance(embed_fitted(model, protected_faces[i]),
                                embed_fitted(model, references[i])));
  }
  return verification_psr_from_distances(d, protocol);
}

// Identification protocol types. Galleries and probes carry embeddings;
// image-level callers embed first (embed_fitted) so ranking stays cheap.
struct LabeledEmbedding {
  std::string label;
  EmbeddingVector e;
};

struct GallerySet {
  std::vector<LabeledEmbedding> entries;

  void validate() const {
    if (entries.empty()) throw Error(Errc::empty_gallery, "gallery has no entries");
    for (const auto& g : entries) {
      if (g.label.empty()) throw Error(Errc::empty_gallery, "gallery entry without a label");
    }
  }
};

struct ProbeEntry {
  EmbeddingVector e;
  std::string true_label;    // the probe's own identity, for untargeted rates
  std::string target_label;  // the identity it tries to pass as, for targeted rates
};

struct RankRates {
  double targeted = std::numeric_limits<double>::quiet_NaN();
  double untargeted = std::numeric_limits<double>::quiet_NaN();
};

// Rank-N table. Targeted rate: fraction of probes whose target identity shows
// up in the top-N gallery candidates. Untargeted rate: fraction whose own
// identity does not. Candidates ranked by ascending cosine distance, ties
// broken by gallery insertion order; N beyond the gallery size saturates.
inline std::map<int, RankRates> identification_metrics(const std::vector<ProbeEntry>& probes,
                                                       const GallerySet& gallery,
                                                       const std::vector<int>& n_list) {
  gallery.validate();
  if (probes.empty()) throw Error(Errc::length_mismatch, "no probes given");
  if (n_list.empty()) throw Error(Errc::bad_manifest, "no rank cutoffs requested");
  for (int n : n_list) {
    if (n < 1) throw Error(Errc::bad_manifest, "rank cutoffs must be positive");
  }
  std::vector<int> cutoffs(n_list);
  std::sort(cutoffs.begin(), cutoffs.end());
  cutoffs.erase(std::unique(cutoffs.begin(), cutoffs.end()), cutoffs.end());

  const int g = static_cast<int>(gallery.entries.size());
  std::map<int, int> targeted_hits, untargeted_hits;
  int targeted_total = 0, untargeted_total = 0;
  std::vector<int> order(g);
  std::vector<double> dist(g);

  for (const auto& probe : probes) {
    for (int i = 0; i < g; ++i) dist[i] = cosine_distance(probe.e, gallery.entries[i].e);
    for (int i = 0; i < g; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](int lhs, int rhs) { return dist[lhs] < dist[rhs]; });

    if (!probe.target_label.empty()) ++targeted_total;
    if (!probe.true_label.empty()) ++untargeted_total;

    for (int n : cutoffs) {
      const int top = std::min(n, g);
      bool has_target = false, has_self = false;
      for (int k = 0; k < top; ++k) {
        const auto& label = gallery.entries[order[k]].label;
        has_target = has_target || (!probe.target_label.empty() && label == probe.target_label);
        has_self = has_self || (!probe.true_label.empty() && label == probe.true_label);
      }
      if (!probe.target_label.empty() && has_target) ++targeted_hits[n];
      if (!probe.true_label.empty() && !has_self) ++untargeted_hits[n];
    }
  }

  std::map<int, RankRates> out;
  for (int n : cutoffs) {
    RankRates r;
    if (targeted_total > 0) r.targeted = 100.0 * targeted_hits[n] / targeted_total;
    if (untargeted_total > 0) r.untargeted = 100.0 * untargeted_hits[n] / untargeted_total;
    out[n] = r;
  }
  return out;
}

// One evaluated condition: a prompt/model/mode cell with its protection and
// quality numbers, ready for report assembly.
struct EvaluationReport {
  double psr = 0;
  std::map<int, RankRates> rank_n;
  double fid = 0;
  double psnr = 0;
  double ssim = 0;

  std::string dataset;
  std::string prompt;
  std::string target_model;
  std::vector<std::string> surrogate_models;
  std::string mode;

  // per-cell provenance: how many images actually backed these numbers
  int images_evaluated = 0;
  int images_missing = 0;
  bool fid_degenerate = false;  // covariance needed a ridge (small sample)
};

}  // namespace facecloak
