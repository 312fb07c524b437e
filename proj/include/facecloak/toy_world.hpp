#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "facecloak/alignment.hpp"
#include "facecloak/error.hpp"
#include "facecloak/image.hpp"
#include "facecloak/latent.hpp"
#include "facecloak/linalg.hpp"
#include "facecloak/models.hpp"
#include "facecloak/rng.hpp"
#include "facecloak/tape.hpp"

namespace facecloak {

// A miniature deterministic model stack: every backbone the pipeline needs,
// as explicit seeded linear(+squash) maps small enough to brute-force in
// tests. No checkpoint files required; everything derives from one seed.

struct ToyWorldOptions {
  int layers = 4;
  int dim = 8;
  int resolution = 16;
  int num_embedders = 4;
  int embed_dim = 32;
  int embedder_input = 12;
  int vl_input = 14;
  int vl_dim = 16;
  double rho = 0.2;    // relative per-embedder deviation from the shared base
  double gain = 2.0;   // generator pre-activation scale
  bool squash = true;  // tanh squashing; false gives the plain linear map
};

namespace detail {

// One matrix kept in both precisions so tape code picks its own scalar type.
template <typename T>
struct Dual;

struct DualMatrix {
  std::shared_ptr<const Matrix<double>> d;
  std::shared_ptr<const Matrix<float>> f;

  DualMatrix() = default;
  explicit DualMatrix(Matrix<double> m) {
    Matrix<float> mf(m.rows, m.cols);
    for (size_t i = 0; i < m.a.size(); ++i) mf.a[i] = static_cast<float>(m.a[i]);
    d = std::make_shared<const Matrix<double>>(std::move(m));
    f = std::make_shared<const Matrix<float>>(std::move(mf));
  }

  template <typename S>
  std::shared_ptr<const Matrix<S>> get() const {
    if constexpr (std::is_same_v<S, double>) return d;
    else return f;
  }
};

struct DualVec {
  std::shared_ptr<const std::vector<double>> d;
  std::shared_ptr<const std::vector<float>> f;

  DualVec() = default;
  explicit DualVec(std::vector<double> v) {
    auto vf = std::make_shared<std::vector<float>>(v.begin(), v.end());
    d = std::make_shared<const std::vector<double>>(std::move(v));
    f = std::move(vf);
  }

  template <typename S>
  std::shared_ptr<const std::vector<S>> get() const {
    if constexpr (std::is_same_v<S, double>) return d;
    else return f;
  }
};

inline std::vector<float> image_vec(const FaceImage& img) { return img.data; }

}  // namespace detail

// x = 0.5 (tanh(W vec(w) + b) + 1), W = gain * orthonormal columns.
// Linear mode drops the squash: x = W vec(w) + b_img with b_img in (0,1).
class ToyGenerator : public Generator {
 public:
  ToyGenerator() = default;
  ToyGenerator(const ToyWorldOptions& opt, Rng rng) : opt_(opt) {
    const int n = pixels(), m = latent_size();
    Matrix<double> w = Matrix<double>::random_normal(n, m, rng);
    orthonormalize_columns(w);
    for (auto& v : w.a) v *= opt_.gain;
    std::vector<double> b(static_cast<size_t>(n));
    for (auto& v : b) v = rng.normal() * 0.5;
    set_params(std::move(w), std::move(b));
  }

  int layers() const override { return opt_.layers; }
  int dim() const override { return opt_.dim; }
  int resolution() const override { return opt_.resolution; }
  bool squash() const { return opt_.squash; }
  double gain() const { return opt_.gain; }
  int pixels() const { return opt_.resolution * opt_.resolution * 3; }
  int latent_size() const { return opt_.layers * opt_.dim; }

  const Matrix<double>& weight() const { return *w_.d; }
  const std::vector<double>& bias_act() const { return *b_.d; }
  const std::vector<double>& bias_image() const { return *b_img_.d; }

  FaceImage generate(const LatentCode& w) const override {
    if (w.layers != opt_.layers || w.dim != opt_.dim) {
      throw Error(Errc::shape_mismatch, "generate: latent shape mismatch");
    }
    std::vector<double> v(w.data.begin(), w.data.end());
    std::vector<double> z(static_cast<size_t>(pixels()));
    matvec(*w_.d, std::span<const double>(v), std::span<double>(z));
    FaceImage img(opt_.resolution, opt_.resolution);
    if (opt_.squash) {
      const auto& b = *b_.d;
      for (size_t i = 0; i < z.size(); ++i)
        img.data[i] = static_cast<float>(0.5 * (std::tanh(z[i] + b[i]) + 1.0));
    } else {
      const auto& b = *b_img_.d;
      for (size_t i = 0; i < z.size(); ++i) img.data[i] = static_cast<float>(z[i] + b[i]);
    }
    return img;
  }

  // Differentiable forward with the stored (frozen) parameters.
  template <typename S>
  Var<S> forward(Tape<S>& t, Var<S> w) const {
    Var<S> z = t.add_const(t.matvec_const(w_.get<S>(), w),
                           opt_.squash ? b_.template get<S>() : b_img_.template get<S>());
    if (!opt_.squash) return z;
    return t.affine(t.tanh_(z), S(0.5), S(0.5));
  }

  // Differentiable forward with caller-owned parameter vars (fine-tuning).
  template <typename S>
  Var<S> forward_theta(Tape<S>& t, Var<S> weight_var, Var<S> bias_var, Var<S> w) const {
    Var<S> z = t.linear(weight_var, w, bias_var, pixels(), latent_size());
    if (!opt_.squash) return z;
    return t.affine(t.tanh_(z), S(0.5), S(0.5));
  }

  // Flattened trainable parameters: weight row-major, then bias.
  std::vector<double> theta() const {
    std::vector<double> th(w_.d->a);
    const auto& b = opt_.squash ? *b_.d : *b_img_.d;
    th.insert(th.end(), b.begin(), b.end());
    return th;
  }

  size_t theta_size() const { return w_.d->a.size() + b_.d->size(); }

  void set_theta(std::span<const double> th) {
    const size_t wn = w_.d->a.size();
    if (th.size() != theta_size()) {
      throw Error(Errc::shape_mismatch, "set_theta: parameter count mismatch");
    }
    Matrix<double> w(pixels(), latent_size());
    std::copy(th.begin(), th.begin() + wn, w.a.begin());
    std::vector<double> b(th.begin() + wn, th.end());
    if (opt_.squash) {
      set_params(std::move(w), std::move(b));
    } else {
      // linear mode trains the image-space bias directly
      w_ = detail::DualMatrix(std::move(w));
      b_img_ = detail::DualVec(std::move(b));
    }
  }

  const ToyWorldOptions& options() const { return opt_; }

 private:
  void set_params(Matrix<double> w, std::vector<double> b) {
    std::vector<double> bi(b.size());
    for (size_t i = 0; i < b.size(); ++i) bi[i] = 0.5 * (std::tanh(b[i]) + 1.0);
    w_ = detail::DualMatrix(std::move(w));
    b_ = detail::DualVec(std::move(b));
    b_img_ = detail::DualVec(std::move(bi));
  }

  ToyWorldOptions opt_;
  detail::DualMatrix w_;
  detail::DualVec b_;      // pre-activation bias (squash mode)
  detail::DualVec b_img_;  // image-space bias (linear mode)
};

// Exact pseudo-inverse of the generator it was built from. Because the
// generator's weight has orthonormal columns (times gain), W+ = W^T / gain^2.
class ToyEncoder : public LatentEncoder {
 public:
  ToyEncoder() = default;
  explicit ToyEncoder(const ToyGenerator& g)
      : opt_(g.options()),
        wt_(std::make_shared<Matrix<double>>(transpose(g.weight()))),
        b_act_(g.bias_act()),
        b_img_(g.bias_image()) {}

  int input_size() const override { return opt_.resolution; }

  LatentCode encode(const FaceImage& img) const override {
    require_shape(img, opt_.resolution, opt_.resolution, "encode");
    const size_t n = img.data.size();
    std::vector<double> z(n);
    if (opt_.squash) {
      constexpr double lim = 1.0 - 1e-6;
      for (size_t i = 0; i < n; ++i) {
        const double u = std::clamp(2.0 * img.data[i] - 1.0, -lim, lim);
        z[i] = std::atanh(u) - b_act_[i];
      }
    } else {
      for (size_t i = 0; i < n; ++i) z[i] = img.data[i] - b_img_[i];
    }
    std::vector<double> v(static_cast<size_t>(opt_.layers) * opt_.dim);
    matvec(*wt_, std::span<const double>(z), std::span<double>(v));
    const double inv_g2 = 1.0 / (opt_.gain * opt_.gain);
    LatentCode w(opt_.layers, opt_.dim);
    for (size_t i = 0; i < v.size(); ++i) w.data[i] = static_cast<float>(v[i] * inv_g2);
    return w;
  }

 private:
  static Matrix<double> transpose(const Matrix<double>& m) {
    Matrix<double> t(m.cols, m.rows);
    for (int i = 0; i < m.rows; ++i)
      for (int j = 0; j < m.cols; ++j) t.at(j, i) = m.at(i, j);
    return t;
  }

  ToyWorldOptions opt_;
  std::shared_ptr<const Matrix<double>> wt_;
  std::vector<double> b_act_;
  std::vector<double> b_img_;
};

// e = normalize(M (vec(img) - mean)), M = base + rho * personal. All K
// embedders share the base, so their distance geometries correlate without
// coinciding. Centering on the population mean face keeps the common image
// component from collapsing every face onto one embedding direction, the way
// a trained backbone normalizes away the average face.
class ToyFaceEmbedder : public FaceEmbedder {
 public:
  ToyFaceEmbedder() = default;
  ToyFaceEmbedder(EmbedderSpec spec, const Matrix<double>& base, double rho,
                  std::vector<double> mean, Rng rng)
      : spec_(std::move(spec)) {
    Matrix<double> m = base;
    for (auto& v : m.a) v += rho * rng.normal();
    m_ = detail::DualMatrix(std::move(m));
    for (auto& v : mean) v = -v;
    neg_mean_ = detail::DualVec(std::move(mean));
  }

  const EmbedderSpec& spec() const override { return spec_; }

  EmbeddingVector embed(const FaceImage& img) const override {
    require_shape(img, spec_.input_size, spec_.input_size, "embed(" + spec_.model_id + ")");
    std::vector<double> v(img.data.begin(), img.data.end());
    const auto& neg = *neg_mean_.d;
    for (size_t i = 0; i < v.size(); ++i) v[i] += neg[i];
    std::vector<double> e(static_cast<size_t>(m_.d->rows));
    matvec(*m_.d, std::span<const double>(v), std::span<double>(e));
    double n = norm2(std::span<const double>(e));
    if (n < 1e-12) n = 1e-12;
    EmbeddingVector out;
    out.model_id = spec_.model_id;
    out.values.resize(e.size());
    for (size_t i = 0; i < e.size(); ++i) out.values[i] = static_cast<float>(e[i] / n);
    return out;
  }

  template <typename S>
  Var<S> forward(Tape<S>& t, Var<S> img_flat) const {
    Var<S> centered = t.add_const(img_flat, neg_mean_.get<S>());
    return t.l2_normalize(t.matvec_const(m_.get<S>(), centered), S(1e-12));
  }

 private:
  EmbedderSpec spec_;
  detail::DualMatrix m_;
  detail::DualVec neg_mean_;
};

// Shared text/image space. The image tower is a differentiable projection;
// text vectors are seeded hashes (constant w.r.t. optimization variables).
class ToyVisionLanguage : public VisionLanguageEncoder {
 public:
  ToyVisionLanguage() = default;
  ToyVisionLanguage(const ToyWorldOptions& opt, uint64_t text_seed, Rng rng)
      : opt_(opt), text_seed_(text_seed) {
    const int n = opt.vl_input * opt.vl_input * 3;
    q_ = detail::DualMatrix(Matrix<double>::random_normal(opt.vl_dim, n, rng));
  }

  int image_size() const override { return opt_.vl_input; }
  int dim() const { return opt_.vl_dim; }

  EmbeddingVector embed_text(const std::string& prompt) const override {
    if (prompt.empty()) throw Error(Errc::empty_prompt, "embed_text: empty prompt");
    Rng rng(derive_seed(text_seed_, prompt));
    std::vector<double> e(static_cast<size_t>(opt_.vl_dim));
    for (auto& v : e) v = rng.normal();
    double n = norm2(std::span<const double>(e));
    if (n < 1e-12) n = 1e-12;
    EmbeddingVector out;
    out.model_id = "toy-vl-text";
    out.values.resize(e.size());
    for (size_t i = 0; i < e.size(); ++i) out.values[i] = static_cast<float>(e[i] / n);
    return out;
  }

  EmbeddingVector embed_image(const FaceImage& img) const override {
    require_shape(img, opt_.vl_input, opt_.vl_input, "embed_image");
    std::vector<double> v(img.data.begin(), img.data.end());
    std::vector<double> e(static_cast<size_t>(opt_.vl_dim));
    matvec(*q_.d, std::span<const double>(v), std::span<double>(e));
    double n = norm2(std::span<const double>(e));
    if (n < 1e-12) n = 1e-12;
    EmbeddingVector out;
    out.model_id = "toy-vl-image";
    out.values.resize(e.size());
    for (size_t i = 0; i < e.size(); ++i) out.values[i] = static_cast<float>(e[i] / n);
    return out;
  }

  template <typename S>
  Var<S> forward_image(Tape<S>& t, Var<S> img_flat) const {
    return t.l2_normalize(t.matvec_const(q_.get<S>(), img_flat), S(1e-12));
  }

 private:
  ToyWorldOptions opt_;
  uint64_t text_seed_ = 0;
  detail::DualMatrix q_;
};

// Perceptual distance from fixed random convolution features:
// mean((tanh(conv(a)) - tanh(conv(b)))^2).
class ToyLpips : public PerceptualLoss {
 public:
  ToyLpips() = default;
  ToyLpips(int resolution, Rng rng) {
    auto cs = std::make_shared<ConvSpec<double>>();
    cs->in_h = resolution;
    cs->in_w = resolution;
    cs->in_c = 3;
    cs->out_c = 6;
    cs->ksize = 3;
    cs->stride = 2;
    cs->kernels.resize(static_cast<size_t>(cs->out_c) * 9 * 3);
    for (auto& v : cs->kernels) v = rng.normal() * 0.4;
    cs->bias.resize(static_cast<size_t>(cs->out_c));
    for (auto& v : cs->bias) v = rng.normal() * 0.1;
    auto cf = std::make_shared<ConvSpec<float>>();
    cf->in_h = cs->in_h;
    cf->in_w = cs->in_w;
    cf->in_c = cs->in_c;
    cf->out_c = cs->out_c;
    cf->ksize = cs->ksize;
    cf->stride = cs->stride;
    cf->kernels.assign(cs->kernels.begin(), cs->kernels.end());
    cf->bias.assign(cs->bias.begin(), cs->bias.end());
    cd_ = std::move(cs);
    cf_ = std::move(cf);
  }

  double operator()(const FaceImage& a, const FaceImage& b) const override {
    if (a.height != b.height || a.width != b.width) {
      throw Error(Errc::shape_mismatch, "perceptual loss: image sizes differ");
    }
    auto fa = features(a), fb = features(b);
    double acc = 0;
    for (size_t i = 0; i < fa.size(); ++i) {
      const double d = fa[i] - fb[i];
      acc += d * d;
    }
    return acc / static_cast<double>(fa.size());
  }

  template <typename S>
  Var<S> forward(Tape<S>& t, Var<S> a, Var<S> b) const {
    auto cs = spec<S>();
    return t.mean_sq_diff(t.tanh_(t.conv2d_const(a, cs)), t.tanh_(t.conv2d_const(b, cs)));
  }

  template <typename S>
  std::shared_ptr<const ConvSpec<S>> spec() const {
    if constexpr (std::is_same_v<S, double>) return cd_;
    else return cf_;
  }

 private:
  std::vector<double> features(const FaceImage& img) const {
    std::vector<double> in(img.data.begin(), img.data.end());
    std::vector<double> out(cd_->out_size());
    conv_forward(*cd_, in.data(), out.data());
    for (auto& v : out) v = std::tanh(v);
    return out;
  }

  std::shared_ptr<const ConvSpec<double>> cd_;
  std::shared_ptr<const ConvSpec<float>> cf_;
};

struct ToyWorld {
  ToyWorldOptions opt;
  uint64_t seed = 0;
  ToyGenerator generator;
  ToyEncoder encoder;
  std::vector<ToyFaceEmbedder> embedders;
  ToyVisionLanguage vl;
  ToyLpips lpips;

  const ToyFaceEmbedder& embedder(const std::string& model_id) const {
    for (const auto& e : embedders)
      if (e.spec().model_id == model_id) return e;
    throw Error(Errc::bad_manifest, "unknown embedder: " + model_id);
  }

  std::vector<const ToyFaceEmbedder*> surrogates(int holdout) const {
    std::vector<const ToyFaceEmbedder*> out;
    for (int i = 0; i < static_cast<int>(embedders.size()); ++i)
      if (i != holdout) out.push_back(&embedders[i]);
    return out;
  }
};

inline ToyWorld make_toy_world(uint64_t seed, ToyWorldOptions opt = {}) {
  ToyWorld w;
  w.opt = opt;
  w.seed = seed;
  w.generator = ToyGenerator(opt, Rng(derive_seed(seed, "generator")));
  w.encoder = ToyEncoder(w.generator);
  {
    // population mean face at the embedders' working size, estimated once
    std::vector<double> mean(static_cast<size_t>(opt.embedder_input) * opt.embedder_input * 3,
                             0.0);
    {
      Rng mean_rng(derive_seed(seed, "mean-face"));
      const int samples = 256;
      LatentCode v(opt.layers, opt.dim);
      for (int s = 0; s < samples; ++s) {
        for (auto& x : v.data) x = static_cast<float>(mean_rng.normal());
        const FaceImage small =
            resize_image(w.generator.generate(v), opt.embedder_input, opt.embedder_input);
        for (size_t i = 0; i < mean.size(); ++i) mean[i] += small.data[i];
      }
      for (auto& x : mean) x /= samples;
    }
    Rng base_rng(derive_seed(seed, "embedder-base"));
    Matrix<double> base =
        Matrix<double>::random_normal(opt.embed_dim, opt.embedder_input * opt.embedder_input * 3,
                                      base_rng);
    for (int k = 0; k < opt.num_embedders; ++k) {
      EmbedderSpec spec;
      spec.model_id = "toy-fr-" + std::to_string(k + 1);
      spec.input_size = opt.embedder_input;
      spec.role = (k + 1 == opt.num_embedders) ? Role::blackbox_target : Role::surrogate;
      w.embedders.emplace_back(std::move(spec), base, opt.rho, mean,
                               Rng(derive_seed(seed, "embedder-" + std::to_string(k))));
    }
  }
  w.vl = ToyVisionLanguage(opt, derive_seed(seed, "vl-text"),
                           Rng(derive_seed(seed, "vl-image")));
  w.lpips = ToyLpips(opt.resolution, Rng(derive_seed(seed, "lpips")));
  return w;
}

struct ToySample {
  FaceImage image;
  LatentCode w;
};

// A face on the generator manifold; optionally stamped with alignment markers
// at the canonical positions so the detection path can run on it.
inline ToySample sample_face(const ToyWorld& world, Rng& rng, bool with_markers = false) {
  ToySample s;
  s.w = LatentCode(world.opt.layers, world.opt.dim);
  for (auto& v : s.w.data) v = static_cast<float>(rng.normal());
  s.image = world.generator.generate(s.w);
  if (with_markers) {
    stamp_landmarks(s.image, canonical_landmarks(world.opt.resolution), 0);
  }
  return s;
}

inline ToySample sample_face(const ToyWorld& world, uint64_t seed, bool with_markers = false) {
  Rng rng(seed);
  return sample_face(world, rng, with_markers);
}

}  // namespace facecloak
