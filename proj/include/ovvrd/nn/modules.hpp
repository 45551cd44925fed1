#pragma once

#include <map>
#include <string>
#include <vector>

#include "ovvrd/nn/autograd.hpp"

namespace ovvrd::nn {

// Ordered registry of learnable parameters. Iteration order is the sorted
// name order, which keeps optimizer updates and checkpoints deterministic.
struct ParamMap {
  std::map<std::string, Var> items;

  void add(const std::string& name, const Var& v) {
    if (!v.defined()) throw ValidationError("param '" + name + "' undefined");
    if (!items.emplace(name, v).second) {
      throw ValidationError("duplicate param name '" + name + "'");
    }
  }

  std::uint64_t fingerprint() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& [name, v] : items) {
      h = fnv1a(h, name);
      h = v.value().fingerprint(h);
    }
    return h;
  }
};

inline Tensor rand_uniform(std::vector<std::size_t> shape, Rng& rng, double scale) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

// y = x W + b with W [in,out]. Scaled uniform fan-in init.
class Linear {
 public:
  Linear() = default;

  Linear(std::size_t in, std::size_t out, Rng& rng) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    w_ = Var::param(rand_uniform({in, out}, rng, scale));
    b_ = Var::param(Tensor({out}));
  }

  static Linear identity_like(std::size_t in, std::size_t out) {
    // Exact identity when in == out. For stacked inputs (in = k*out) the
    // j-th block starts at I/(j+1), so a concat projection begins close to a
    // sum without coinciding with it.
    Linear l;
    Tensor w({in, out});
    for (std::size_t i = 0; i < in; ++i) {
      w.at2(i, i % out) = 1.0 / static_cast<double>(1 + i / out);
    }
    l.w_ = Var::param(std::move(w));
    l.b_ = Var::param(Tensor({out}));
    return l;
  }

  static Linear zeros(std::size_t in, std::size_t out) {
    Linear l;
    l.w_ = Var::param(Tensor({in, out}));
    l.b_ = Var::param(Tensor({out}));
    return l;
  }

  Var operator()(const Var& x) const { return add_rowvec(matmul(x, w_), b_); }

  Var vec(const Var& v) const {
    // [in] -> [out]
    return reshape((*this)(reshape(v, {1, v.value().numel()})), {w_.value().dim(1)});
  }

  Var& weight() { return w_; }
  Var& bias() { return b_; }
  const Var& weight() const { return w_; }

  void collect(const std::string& prefix, ParamMap& params) const {
    params.add(prefix + ".w", w_);
    params.add(prefix + ".b", b_);
  }

 private:
  Var w_;
  Var b_;
};

class LayerNorm {
 public:
  LayerNorm() = default;

  explicit LayerNorm(std::size_t d)
      : gamma_(Var::param(Tensor::full({d}, 1.0))), beta_(Var::param(Tensor({d}))) {}

  Var operator()(const Var& x) const {
    Var y = layer_norm_lastdim(x);
    if (y.value().ndim() == 2) return add_rowvec(mul_rowvec(y, gamma_), beta_);
    if (y.value().ndim() == 1) {
      const std::size_t d = y.value().dim(0);
      return reshape(add_rowvec(mul_rowvec(reshape(y, {1, d}), gamma_), beta_), {d});
    }
    throw ValidationError("LayerNorm: expected rank 1 or 2");
  }

  void collect(const std::string& prefix, ParamMap& params) const {
    params.add(prefix + ".gamma", gamma_);
    params.add(prefix + ".beta", beta_);
  }

 private:
  Var gamma_;
  Var beta_;
};

// Multi-head scaled dot-product attention. The post-softmax attention rows of
// the last forward pass are kept for inspection (they must sum to 1).
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;

  MultiHeadAttention(std::size_t d, std::size_t n_heads, Rng& rng)
      : d_(d), n_heads_(n_heads) {
    if (d % n_heads != 0) throw ValidationError("attention: d not divisible by heads");
    wq_ = Linear(d, d, rng);
    wk_ = Linear(d, d, rng);
    wv_ = Linear(d, d, rng);
    wo_ = Linear(d, d, rng);
  }

  // q: [nq,d], kv: [nk,d]
  Var operator()(const Var& q_in, const Var& kv_in, Rng& rng, bool train,
                 double dropout_rate) const {
    const std::size_t dh = d_ / n_heads_;
    const Var q = wq_(q_in);
    const Var k = wk_(kv_in);
    const Var v = wv_(kv_in);
    last_attention_.clear();
    std::vector<Var> heads;
    heads.reserve(n_heads_);
    for (std::size_t h = 0; h < n_heads_; ++h) {
      const Var qh = slice_lastdim(q, h * dh, dh);
      const Var kh = slice_lastdim(k, h * dh, dh);
      const Var vh = slice_lastdim(v, h * dh, dh);
      Var logits = mul_scalar(matmul(qh, transpose(kh)),
                              1.0 / std::sqrt(static_cast<double>(dh)));
      Var attn = softmax_lastdim(logits);
      last_attention_.push_back(attn.value());
      attn = dropout(attn, dropout_rate, rng, train);
      heads.push_back(matmul(attn, vh));
    }
    Var cat = heads[0];
    for (std::size_t h = 1; h < n_heads_; ++h) cat = concat_lastdim(cat, heads[h]);
    return wo_(cat);
  }

  const std::vector<Tensor>& last_attention() const { return last_attention_; }

  Linear& output_proj() { return wo_; }

  void collect(const std::string& prefix, ParamMap& params) const {
    wq_.collect(prefix + ".wq", params);
    wk_.collect(prefix + ".wk", params);
    wv_.collect(prefix + ".wv", params);
    wo_.collect(prefix + ".wo", params);
  }

 private:
  std::size_t d_ = 0;
  std::size_t n_heads_ = 0;
  Linear wq_, wk_, wv_, wo_;
  mutable std::vector<Tensor> last_attention_;
};

// Pre-norm transformer layer: x + Attn(LN(x)), then x + FFN(LN(x)).
// Zeroing the attention output projection and the second FFN weight turns the
// layer into an exact identity, which the refiner tests rely on.
class TransformerLayer {
 public:
  TransformerLayer() = default;

  TransformerLayer(std::size_t d, std::size_t n_heads, std::size_t d_ff, Rng& rng)
      : attn_(d, n_heads, rng),
        ln1_(d),
        ln2_(d),
        ff1_(d, d_ff, rng),
        ff2_(d_ff, d, rng) {}

  Var operator()(const Var& x_in, Rng& rng, bool train, double dropout_rate) const {
    Var h = ln1_(x_in);
    Var x = add(x_in, dropout(attn_(h, h, rng, train, dropout_rate), dropout_rate,
                              rng, train));
    Var f = ff2_(gelu(ff1_(ln2_(x))));
    return add(x, dropout(f, dropout_rate, rng, train));
  }

  const MultiHeadAttention& attention() const { return attn_; }
  MultiHeadAttention& attention() { return attn_; }
  Linear& ffn_out() { return ff2_; }

  void collect(const std::string& prefix, ParamMap& params) const {
    attn_.collect(prefix + ".attn", params);
    ln1_.collect(prefix + ".ln1", params);
    ln2_.collect(prefix + ".ln2", params);
    ff1_.collect(prefix + ".ff1", params);
    ff2_.collect(prefix + ".ff2", params);
  }

 private:
  MultiHeadAttention attn_;
  LayerNorm ln1_, ln2_;
  Linear ff1_, ff2_;
};

// Batch-normalization flavoured for tiny desk-scale batches: activations are
// normalized with the running statistics (gradients flow through the affine
// part only), and the statistics are folded in from observed batches during
// training. At initialization (mean 0, var 1, gamma 1, beta 0) it is the
// identity.
class FrozenNorm {
 public:
  FrozenNorm() = default;

  explicit FrozenNorm(std::size_t d)
      : gamma_(Var::param(Tensor::full({d}, 1.0))),
        beta_(Var::param(Tensor({d}))),
        running_mean_(Tensor({d})),
        running_var_(Tensor::full({d}, 1.0)) {}

  Var operator()(const Var& x, bool train) const {
    const std::size_t d = gamma_.value().dim(0);
    const bool is_vec = x.value().ndim() == 1;
    Var rows = is_vec ? reshape(x, {1, d}) : x;
    if (rows.value().ndim() != 2 || rows.value().dim(1) != d) {
      throw ValidationError("FrozenNorm: bad input shape");
    }
    if (train) observe(rows.value());
    Tensor shift(running_mean_.shape());
    Tensor scale(running_var_.shape());
    for (std::size_t j = 0; j < d; ++j) {
      scale[j] = 1.0 / std::sqrt(running_var_[j] + 1e-5);
      shift[j] = -running_mean_[j] * scale[j];
    }
    Var y = add_rowvec(mul_rowvec(rows, Var::constant(scale)), Var::constant(shift));
    y = add_rowvec(mul_rowvec(y, gamma_), beta_);
    return is_vec ? reshape(y, {d}) : y;
  }

  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }
  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

  void collect(const std::string& prefix, ParamMap& params) const {
    params.add(prefix + ".gamma", gamma_);
    params.add(prefix + ".beta", beta_);
  }

 private:
  void observe(const Tensor& rows) const {
    const std::size_t n = rows.dim(0), d = rows.dim(1);
    constexpr double kMomentum = 0.1;
    for (std::size_t j = 0; j < d; ++j) {
      double mu = 0.0;
      for (std::size_t i = 0; i < n; ++i) mu += rows.at2(i, j);
      mu /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        var += (rows.at2(i, j) - mu) * (rows.at2(i, j) - mu);
      }
      var = n > 1 ? var / static_cast<double>(n) : 0.0;
      running_mean_[j] = (1.0 - kMomentum) * running_mean_[j] + kMomentum * mu;
      running_var_[j] = (1.0 - kMomentum) * running_var_[j] + kMomentum * var;
    }
  }

  Var gamma_;
  Var beta_;
  mutable Tensor running_mean_;
  mutable Tensor running_var_;
};

}  // namespace ovvrd::nn
