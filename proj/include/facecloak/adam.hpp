#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace facecloak {

// Plain Adam with bias correction. Coordinates with freeze[i] == 0 are never
// read or written, so frozen parameters stay bitwise at their initial values.
template <typename S>
class Adam {
 public:
  Adam(size_t n, S lr, S beta1 = S(0.9), S beta2 = S(0.999), S eps = S(1e-8))
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), m_(n, S(0)), v_(n, S(0)) {}

  void step(std::span<S> x, std::span<const S> g, const std::vector<S>* freeze = nullptr) {
    ++t_;
    const S c1 = S(1) - std::pow(b1_, static_cast<S>(t_));
    const S c2 = S(1) - std::pow(b2_, static_cast<S>(t_));
    for (size_t i = 0; i < x.size(); ++i) {
      if (freeze && (*freeze)[i] == S(0)) continue;
      m_[i] = b1_ * m_[i] + (S(1) - b1_) * g[i];
      v_[i] = b2_ * v_[i] + (S(1) - b2_) * g[i] * g[i];
      const S mhat = m_[i] / c1;
      const S vhat = v_[i] / c2;
      x[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  long iterations() const { return t_; }

 private:
  S lr_, b1_, b2_, eps_;
  long t_ = 0;
  std::vector<S> m_, v_;
};

}  // namespace facecloak
