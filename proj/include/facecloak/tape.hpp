#pragma once

#include <cassert>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "facecloak/linalg.hpp"
#include "facecloak/resample.hpp"

namespace facecloak {

// Reverse-mode tape over flat value vectors. Each operation records a node
// with its forward value and a backward closure; backward() walks the nodes
// in reverse creation order. A fresh tape is built per optimization step.
template <typename S>
struct Var {
  int id = -1;
  int size = 0;
  bool valid() const { return id >= 0; }
};

// Fixed-kernel valid-padding convolution description, usable both on and off
// the tape.
template <typename S>
struct ConvSpec {
  int in_h = 0, in_w = 0, in_c = 0;
  int out_c = 0, ksize = 3, stride = 1;
  std::vector<S> kernels;  // [out_c][ksize][ksize][in_c]
  std::vector<S> bias;     // [out_c]
  int out_h() const { return (in_h - ksize) / stride + 1; }
  int out_w() const { return (in_w - ksize) / stride + 1; }
  size_t out_size() const { return static_cast<size_t>(out_h()) * out_w() * out_c; }
};

template <typename S>
void conv_forward(const ConvSpec<S>& cs, const S* in, S* out) {
  const int oh = cs.out_h(), ow = cs.out_w();
  for (int oy = 0; oy < oh; ++oy)
    for (int ox = 0; ox < ow; ++ox)
      for (int oc = 0; oc < cs.out_c; ++oc) {
        S acc = cs.bias.empty() ? S(0) : cs.bias[oc];
        const S* k =
            cs.kernels.data() + static_cast<size_t>(oc) * cs.ksize * cs.ksize * cs.in_c;
        for (int ky = 0; ky < cs.ksize; ++ky)
          for (int kx = 0; kx < cs.ksize; ++kx) {
            const S* px = in + (static_cast<size_t>(oy * cs.stride + ky) * cs.in_w +
                                (ox * cs.stride + kx)) * cs.in_c;
            const S* kk = k + (static_cast<size_t>(ky) * cs.ksize + kx) * cs.in_c;
            for (int ic = 0; ic < cs.in_c; ++ic) acc += kk[ic] * px[ic];
          }
        out[(static_cast<size_t>(oy) * ow + ox) * cs.out_c + oc] = acc;
      }
}

template <typename S>
class Tape {
 public:
  using Vec = std::vector<S>;

  Var<S> leaf(Vec v) {
    Var<S> out{static_cast<int>(nodes_.size()), static_cast<int>(v.size())};
    nodes_.push_back(Node{std::move(v), nullptr});
    return out;
  }

  Var<S> leaf(std::span<const S> v) { return leaf(Vec(v.begin(), v.end())); }

  std::span<const S> val(Var<S> v) const { return nodes_[v.id].val; }
  S scalar(Var<S> v) const {
    assert(v.size == 1);
    return nodes_[v.id].val[0];
  }

  // ---- elementwise ----

  Var<S> add(Var<S> a, Var<S> b) {
    assert(a.size == b.size);
    Vec y(nodes_[a.id].val);
    const auto& vb = nodes_[b.id].val;
    for (int i = 0; i < a.size; ++i) y[i] += vb[i];
    return record(std::move(y), [a, b](Tape& t, const Node& n) {
      t.accumulate(a, n.adj);
      t.accumulate(b, n.adj);
    });
  }

  Var<S> sub(Var<S> a, Var<S> b) {
    assert(a.size == b.size);
    Vec y(nodes_[a.id].val);
    const auto& vb = nodes_[b.id].val;
    for (int i = 0; i < a.size; ++i) y[i] -= vb[i];
    return record(std::move(y), [a, b](Tape& t, const Node& n) {
      t.accumulate(a, n.adj);
      t.accumulate_scaled(b, n.adj, S(-1));
    });
  }

  // y = k*a + m
  Var<S> affine(Var<S> a, S k, S m) {
    Vec y(nodes_[a.id].val);
    for (auto& v : y) v = k * v + m;
    return record(std::move(y), [a, k](Tape& t, const Node& n) {
      t.accumulate_scaled(a, n.adj, k);
    });
  }

  Var<S> add_const(Var<S> a, std::shared_ptr<const Vec> c) {
    assert(static_cast<int>(c->size()) == a.size);
    Vec y(nodes_[a.id].val);
    for (int i = 0; i < a.size; ++i) y[i] += (*c)[i];
    return record(std::move(y),
                  [a](Tape& t, const Node& n) { t.accumulate(a, n.adj); });
  }

  Var<S> hadamard_const(Var<S> a, std::shared_ptr<const Vec> m) {
    assert(static_cast<int>(m->size()) == a.size);
    Vec y(nodes_[a.id].val);
    for (int i = 0; i < a.size; ++i) y[i] *= (*m)[i];
    return record(std::move(y), [a, m](Tape& t, const Node& n) {
      auto& ga = t.adj(a);
      for (int i = 0; i < a.size; ++i) ga[i] += (*m)[i] * n.adj[i];
    });
  }

  Var<S> tanh_(Var<S> a) {
    Vec y(nodes_[a.id].val);
    for (auto& v : y) v = std::tanh(v);
    return record(std::move(y), [a](Tape& t, const Node& n) {
      auto& ga = t.adj(a);
      for (int i = 0; i < a.size; ++i) ga[i] += (S(1) - n.val[i] * n.val[i]) * n.adj[i];
    });
  }

  // ---- linear maps ----

  // y = W x + b with gradients into W, x and b. W is row-major rows x cols.
  Var<S> linear(Var<S> w, Var<S> x, Var<S> b, int rows, int cols) {
    assert(w.size == rows * cols && x.size == cols);
    assert(!b.valid() || b.size == rows);
    const auto& vw = nodes_[w.id].val;
    const auto& vx = nodes_[x.id].val;
    Vec y(static_cast<size_t>(rows), S(0));
    for (int i = 0; i < rows; ++i) {
      S acc = b.valid() ? nodes_[b.id].val[i] : S(0);
      const S* row = vw.data() + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) acc += row[j] * vx[j];
      y[static_cast<size_t>(i)] = acc;
    }
    return record(std::move(y), [w, x, b, rows, cols](Tape& t, const Node& n) {
      const auto& vw = t.nodes_[w.id].val;
      const auto& vx = t.nodes_[x.id].val;
      auto& gw = t.adj(w);
      auto& gx = t.adj(x);
      for (int i = 0; i < rows; ++i) {
        const S gi = n.adj[i];
        if (gi == S(0)) continue;
        S* gwrow = gw.data() + static_cast<size_t>(i) * cols;
        const S* wrow = vw.data() + static_cast<size_t>(i) * cols;
        for (int j = 0; j < cols; ++j) {
          gwrow[j] += gi * vx[j];
          gx[j] += gi * wrow[j];
        }
      }
      if (b.valid()) {
        auto& gb = t.adj(b);
        for (int i = 0; i < rows; ++i) gb[i] += n.adj[i];
      }
    });
  }

  // y = M x for a constant matrix
  Var<S> matvec_const(std::shared_ptr<const Matrix<S>> m, Var<S> x) {
    assert(x.size == m->cols);
    Vec y(static_cast<size_t>(m->rows), S(0));
    matvec(*m, std::span<const S>(nodes_[x.id].val), std::span<S>(y));
    return record(std::move(y), [m, x](Tape& t, const Node& n) {
      Vec gx(static_cast<size_t>(m->cols), S(0));
      matvec_transposed(*m, std::span<const S>(n.adj), std::span<S>(gx));
      t.accumulate(x, gx);
    });
  }

  // ---- normalization and reductions ----

  Var<S> l2_normalize(Var<S> x, S eps) {
    const auto& vx = nodes_[x.id].val;
    double nn = 0.0;
    for (int i = 0; i < x.size; ++i) nn += static_cast<double>(vx[i]) * vx[i];
    const S n = static_cast<S>(std::sqrt(nn));
    const S d = std::max(n, eps);
    Vec y(vx);
    for (auto& v : y) v /= d;
    const bool clamped = n <= eps;
    return record(std::move(y), [x, d, clamped](Tape& t, const Node& n_) {
      auto& gx = t.adj(x);
      if (clamped) {
        for (int i = 0; i < x.size; ++i) gx[i] += n_.adj[i] / d;
        return;
      }
      S yg = S(0);
      for (int i = 0; i < x.size; ++i) yg += n_.val[i] * n_.adj[i];
      for (int i = 0; i < x.size; ++i) gx[i] += (n_.adj[i] - n_.val[i] * yg) / d;
    });
  }

  Var<S> dot(Var<S> a, Var<S> b) {
    assert(a.size == b.size);
    const auto& va = nodes_[a.id].val;
    const auto& vb = nodes_[b.id].val;
    S acc = S(0);
    for (int i = 0; i < a.size; ++i) acc += va[i] * vb[i];
    return record(Vec{acc}, [a, b](Tape& t, const Node& n) {
      const S g = n.adj[0];
      const auto& va = t.nodes_[a.id].val;
      const auto& vb = t.nodes_[b.id].val;
      auto& ga = t.adj(a);
      auto& gb = t.adj(b);
      for (int i = 0; i < a.size; ++i) {
        ga[i] += g * vb[i];
        gb[i] += g * va[i];
      }
    });
  }

  // Euclidean norm with a zero guard: below `guard` the subgradient is 0.
  Var<S> norm(Var<S> x, S guard) {
    const auto& vx = nodes_[x.id].val;
    double nn = 0.0;
    for (int i = 0; i < x.size; ++i) nn += static_cast<double>(vx[i]) * vx[i];
    const S n = static_cast<S>(std::sqrt(nn));
    return record(Vec{n}, [x, n, guard](Tape& t, const Node& n_) {
      if (n <= guard) return;
      const S g = n_.adj[0] / n;
      const auto& vx = t.nodes_[x.id].val;
      auto& gx = t.adj(x);
      for (int i = 0; i < x.size; ++i) gx[i] += g * vx[i];
    });
  }

  Var<S> mean(Var<S> x) {
    const auto& vx = nodes_[x.id].val;
    S acc = S(0);
    for (int i = 0; i < x.size; ++i) acc += vx[i];
    acc /= static_cast<S>(x.size);
    return record(Vec{acc}, [x](Tape& t, const Node& n) {
      const S g = n.adj[0] / static_cast<S>(x.size);
      auto& gx = t.adj(x);
      for (int i = 0; i < x.size; ++i) gx[i] += g;
    });
  }

  Var<S> mean_sq_diff(Var<S> a, Var<S> b) {
    assert(a.size == b.size);
    const auto& va = nodes_[a.id].val;
    const auto& vb = nodes_[b.id].val;
    double acc = 0.0;
    for (int i = 0; i < a.size; ++i) {
      const double d = static_cast<double>(va[i]) - vb[i];
      acc += d * d;
    }
    const S y = static_cast<S>(acc / a.size);
    return record(Vec{y}, [a, b](Tape& t, const Node& n) {
      const S c = S(2) * n.adj[0] / static_cast<S>(a.size);
      const auto& va = t.nodes_[a.id].val;
      const auto& vb = t.nodes_[b.id].val;
      auto& ga = t.adj(a);
      auto& gb = t.adj(b);
      for (int i = 0; i < a.size; ++i) {
        const S d = c * (va[i] - vb[i]);
        ga[i] += d;
        gb[i] -= d;
      }
    });
  }

  // Weighted sum of scalar vars.
  Var<S> wsum(const std::vector<std::pair<Var<S>, S>>& terms) {
    S acc = S(0);
    for (const auto& [v, c] : terms) {
      assert(v.size == 1);
      acc += c * nodes_[v.id].val[0];
    }
    return record(Vec{acc}, [terms](Tape& t, const Node& n) {
      for (const auto& [v, c] : terms) t.adj(v)[0] += c * n.adj[0];
    });
  }

  // ---- structured ops ----

  Var<S> resize_bilinear(Var<S> img, std::shared_ptr<const ResizePlan> plan) {
    assert(img.size == plan->in_h * plan->in_w * plan->channels);
    Vec y(static_cast<size_t>(plan->out_h) * plan->out_w * plan->channels, S(0));
    resize_forward(*plan, nodes_[img.id].val.data(), y.data());
    return record(std::move(y), [img, plan](Tape& t, const Node& n) {
      auto& gi = t.adj(img);
      resize_backward(*plan, n.adj.data(), gi.data());
    });
  }

  // Valid-padding convolution with fixed (non-trainable) kernels.
  Var<S> conv2d_const(Var<S> img, std::shared_ptr<const ConvSpec<S>> cs) {
    assert(img.size == cs->in_h * cs->in_w * cs->in_c);
    Vec y(cs->out_size(), S(0));
    conv_forward(*cs, nodes_[img.id].val.data(), y.data());
    return record(std::move(y), [img, cs](Tape& t, const Node& n) {
      const int oh = cs->out_h(), ow = cs->out_w();
      auto& gx = t.adj(img);
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int oc = 0; oc < cs->out_c; ++oc) {
            const S g = n.adj[(static_cast<size_t>(oy) * ow + ox) * cs->out_c + oc];
            if (g == S(0)) continue;
            const S* k = cs->kernels.data() +
                         static_cast<size_t>(oc) * cs->ksize * cs->ksize * cs->in_c;
            for (int ky = 0; ky < cs->ksize; ++ky)
              for (int kx = 0; kx < cs->ksize; ++kx) {
                S* px = gx.data() +
                        (static_cast<size_t>(oy * cs->stride + ky) * cs->in_w +
                         (ox * cs->stride + kx)) * cs->in_c;
                const S* kk = k + (static_cast<size_t>(ky) * cs->ksize + kx) * cs->in_c;
                for (int ic = 0; ic < cs->in_c; ++ic) px[ic] += g * kk[ic];
              }
          }
    });
  }

  // ---- backward ----

  void backward(Var<S> root) {
    assert(root.size == 1);
    for (auto& n : nodes_) {
      n.adj.assign(n.val.size(), S(0));
    }
    nodes_[root.id].adj[0] = S(1);
    for (int i = root.id; i >= 0; --i) {
      if (nodes_[i].back) nodes_[i].back(*this, nodes_[i]);
    }
  }

  std::span<const S> grad(Var<S> v) const { return nodes_[v.id].adj; }

 private:
  struct Node {
    Vec val;
    std::function<void(Tape&, const Node&)> back;
    Vec adj;
  };

  Var<S> record(Vec y, std::function<void(Tape&, const Node&)> back) {
    Var<S> out{static_cast<int>(nodes_.size()), static_cast<int>(y.size())};
    nodes_.push_back(Node{std::move(y), std::move(back)});
    return out;
  }

  Vec& adj(Var<S> v) { return nodes_[v.id].adj; }

  void accumulate(Var<S> v, const Vec& g) {
    auto& a = nodes_[v.id].adj;
    for (size_t i = 0; i < a.size(); ++i) a[i] += g[i];
  }

  void accumulate_scaled(Var<S> v, const Vec& g, S k) {
    auto& a = nodes_[v.id].adj;
    for (size_t i = 0; i < a.size(); ++i) a[i] += k * g[i];
  }

  std::vector<Node> nodes_;
};

// Convenience: cosine similarity of two vectors as a scalar var.
template <typename S>
Var<S> cosine_sim(Tape<S>& t, Var<S> a, Var<S> b, S eps) {
  return t.dot(t.l2_normalize(a, eps), t.l2_normalize(b, eps));
}

}  // namespace facecloak
