#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "facecloak/error.hpp"

namespace facecloak {

// Frechet distance between Gaussian fits of two feature samples. Real runs
// feed pooled backbone features; desk-scale tests feed low-dimensional
// samples or population moments directly so the closed form is exact.

struct GaussianMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  bool shrunk = false;  // ridge added because the sample cannot be full rank
};

inline GaussianMoments fit_moments(const std::vector<std::vector<double>>& sample) {
  if (sample.empty()) {
    throw Error(Errc::insufficient_pairs, "feature sample is empty");
  }
  const int n = static_cast<int>(sample.size());
  const int d = static_cast<int>(sample.front().size());
  if (d == 0) throw Error(Errc::shape_mismatch, "zero-dimensional features");
  for (const auto& row : sample) {
    if (static_cast<int>(row.size()) != d) {
      throw Error(Errc::shape_mismatch, "feature rows have mixed dimensions");
    }
  }

  GaussianMoments m;
  m.mean = Eigen::VectorXd::Zero(d);
  for (const auto& row : sample)
    for (int j = 0; j < d; ++j) m.mean[j] += row[j];
  m.mean /= n;

  m.cov = Eigen::MatrixXd::Zero(d, d);
  if (n > 1) {
    for (const auto& row : sample) {
      Eigen::VectorXd delta(d);
      for (int j = 0; j < d; ++j) delta[j] = row[j] - m.mean[j];
      m.cov += delta * delta.transpose();
    }
    m.cov /= (n - 1);
  }
  // A sample smaller than d+1 rows cannot be full rank; repeated rows can be
  // singular even past that. Either way a small ridge keeps the square root
  // well defined, and the result is flagged as degenerate.
  bool deficient = n < d + 1;
  if (!deficient) {
    deficient = Eigen::LLT<Eigen::MatrixXd>(m.cov).info() != Eigen::Success;
  }
  if (deficient) {
    m.cov += 1e-6 * Eigen::MatrixXd::Identity(d, d);
    m.shrunk = true;
  }
  return m;
}

namespace detail {

// Denman-Beavers iteration. The products FID takes roots of are similar to
// symmetric positive definite matrices, where this converges quadratically.
inline Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& a, int* iterations = nullptr) {
  Eigen::MatrixXd y = a;
  Eigen::MatrixXd z = Eigen::MatrixXd::Identity(a.rows(), a.cols());
  int used = 0;
  for (int k = 0; k < 100; ++k) {
    Eigen::MatrixXd yn = 0.5 * (y + z.inverse());
    Eigen::MatrixXd zn = 0.5 * (z + y.inverse());
    const double step = (yn - y).norm();
    y = std::move(yn);
    z = std::move(zn);
    used = k + 1;
    if (step <= 1e-13 * std::max(1.0, y.norm())) break;
  }
  if (iterations) *iterations = used;
  return y;
}

}  // namespace detail

struct FidResult {
  double value = 0;
  bool shrinkage_applied = false;
  int sqrt_iterations = 0;
};

inline FidResult fid_from_moments(const GaussianMoments& a, const GaussianMoments& b) {
  if (a.mean.size() != b.mean.size()) {
    throw Error(Errc::shape_mismatch, "feature dimensions differ between samples");
  }
  FidResult r;
  r.shrinkage_applied = a.shrunk || b.shrunk;
  const Eigen::MatrixXd cross = detail::matrix_sqrt(a.cov * b.cov, &r.sqrt_iterations);
  r.value = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
  return r;
}

inline FidResult fid_detailed(const std::vector<std::vector<double>>& set_a,
                              const std::vector<std::vector<double>>& set_b) {
  return fid_from_moments(fit_moments(set_a), fit_moments(set_b));
}

inline double fid(const std::vector<std::vector<double>>& set_a,
                  const std::vector<std::vector<double>>& set_b) {
  return fid_detailed(set_a, set_b).value;
}

}  // namespace facecloak
