#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "ovvrd/core/error.hpp"
#include "ovvrd/core/hash.hpp"
#include "ovvrd/nn/tensor.hpp"

namespace ovvrd::nn {

// Reverse-mode autodiff over a dynamically built tape. Nodes hold the forward
// value; backward() seeds a scalar root and pushes gradients to the leaves.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backprop;  // empty for leaves
};

using NodePtr = std::shared_ptr<Node>;

class Var {
 public:
  Var() = default;

  static Var constant(Tensor t) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(t);
    v.node_->requires_grad = false;
    return v;
  }

  static Var param(Tensor t) {
    Var v;
    v.node_ = std::make_shared<Node>();
    v.node_->value = std::move(t);
    v.node_->requires_grad = true;
    return v;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  Tensor& grad() { return node_->grad; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<std::size_t>& shape() const { return node_->value.shape(); }
  NodePtr node() const { return node_; }

  static Var wrap(NodePtr n) {
    Var v;
    v.node_ = std::move(n);
    return v;
  }

 private:
  NodePtr node_;
};

namespace ag {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) {
      n->requires_grad = true;
      break;
    }
  }
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value())) {
    throw ValidationError(std::string(op) + ": shape mismatch " +
                          a.value().shape_str() + " vs " + b.value().shape_str());
  }
}

}  // namespace ag

// ---- elementwise binary -----------------------------------------------------

inline Var add(const Var& a, const Var& b) {
  ag::check_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
  return Var::wrap(ag::make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (int s = 0; s < 2; ++s) {
      Node& p = *self.parents[s];
      if (!p.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
    }
  }));
}

inline Var sub(const Var& a, const Var& b) {
  ag::check_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
  return Var::wrap(ag::make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i];
      if (pb.requires_grad) pb.grad[i] -= self.grad[i];
    }
  }));
}

inline Var mul(const Var& a, const Var& b) {
  ag::check_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  return Var::wrap(ag::make_op(std::move(out), {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.value[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.value[i];
    }
  }));
}

// ---- scalar (double) ops ----------------------------------------------------

inline Var add_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += c;
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
  }));
}

inline Var mul_scalar(const Var& a, double c) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [c](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += c * self.grad[i];
  }));
}

inline Var neg(const Var& a) { return mul_scalar(a, -1.0); }

// out = a * s where s is a rank-0 Var broadcast over a.
inline Var scale(const Var& a, const Var& s) {
  if (s.value().numel() != 1) throw ValidationError("scale: s must be scalar");
  const double sv = s.value()[0];
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= sv;
  return Var::wrap(ag::make_op(std::move(out), {a.node(), s.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& ps = *self.parents[1];
    const double sv = ps.value[0];
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      if (pa.requires_grad) pa.grad[i] += sv * self.grad[i];
      if (ps.requires_grad) ps.grad[0] += self.grad[i] * pa.value[i];
    }
  }));
}

// ---- broadcast over rows ----------------------------------------------------

inline Var add_rowvec(const Var& m, const Var& v) {
  if (m.value().ndim() != 2 || v.value().ndim() != 1 ||
      m.value().dim(1) != v.value().dim(0)) {
    throw ValidationError("add_rowvec: expected [n,d] and [d]");
  }
  const std::size_t n = m.value().dim(0), d = m.value().dim(1);
  Tensor out = m.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at2(i, j) += v.value()[j];
  }
  return Var::wrap(ag::make_op(std::move(out), {m.node(), v.node()}, [n, d](Node& self) {
    Node& pm = *self.parents[0];
    Node& pv = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double g = self.grad.at2(i, j);
        if (pm.requires_grad) pm.grad.at2(i, j) += g;
        if (pv.requires_grad) pv.grad[j] += g;
      }
    }
  }));
}

inline Var mul_rowvec(const Var& m, const Var& v) {
  if (m.value().ndim() != 2 || v.value().ndim() != 1 ||
      m.value().dim(1) != v.value().dim(0)) {
    throw ValidationError("mul_rowvec: expected [n,d] and [d]");
  }
  const std::size_t n = m.value().dim(0), d = m.value().dim(1);
  Tensor out = m.value();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at2(i, j) *= v.value()[j];
  }
  return Var::wrap(ag::make_op(std::move(out), {m.node(), v.node()}, [n, d](Node& self) {
    Node& pm = *self.parents[0];
    Node& pv = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        const double g = self.grad.at2(i, j);
        if (pm.requires_grad) pm.grad.at2(i, j) += g * pv.value[j];
        if (pv.requires_grad) pv.grad[j] += g * pm.value.at2(i, j);
      }
    }
  }));
}

// ---- linear algebra ----------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 ||
      a.value().dim(1) != b.value().dim(0)) {
    throw ValidationError("matmul: incompatible shapes " + a.value().shape_str() +
                          " x " + b.value().shape_str());
  }
  const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a.value().at2(i, p);
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out.at2(i, j) += av * b.value().at2(p, j);
    }
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node(), b.node()},
                               [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            s += self.grad.at2(i, j) * pb.value.at2(p, j);
          }
          pa.grad.at2(i, p) += s;
        }
      }
    }
    if (pb.requires_grad) {
      // dB = A^T * G
      for (std::size_t p = 0; p < k; ++p) {
        for (std::size_t j = 0; j < n; ++j) {
          double s = 0.0;
          for (std::size_t i = 0; i < m; ++i) {
            s += pa.value.at2(i, p) * self.grad.at2(i, j);
          }
          pb.grad.at2(p, j) += s;
        }
      }
    }
  }));
}

inline Var transpose(const Var& a) {
  if (a.value().ndim() != 2) throw ValidationError("transpose: expected 2-d");
  const std::size_t m = a.value().dim(0), n = a.value().dim(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at2(j, i) = a.value().at2(i, j);
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [m, n](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) p.grad.at2(i, j) += self.grad.at2(j, i);
    }
  }));
}

// Swap the first two axes of a rank>=2 tensor.
inline Var swap01(const Var& a) {
  const auto& sh = a.value().shape();
  if (sh.size() < 2) throw ValidationError("swap01: rank < 2");
  const std::size_t p = sh[0], q = sh[1];
  std::size_t inner = 1;
  for (std::size_t i = 2; i < sh.size(); ++i) inner *= sh[i];
  std::vector<std::size_t> osh = sh;
  std::swap(osh[0], osh[1]);
  Tensor out(osh);
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < q; ++j) {
      const double* src = a.value().data() + (i * q + j) * inner;
      double* dst = out.data() + (j * p + i) * inner;
      std::copy(src, src + inner, dst);
    }
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [p, q, inner](Node& self) {
    Node& pa = *self.parents[0];
    if (!pa.requires_grad) return;
    for (std::size_t i = 0; i < p; ++i) {
      for (std::size_t j = 0; j < q; ++j) {
        const double* g = self.grad.data() + (j * p + i) * inner;
        double* dst = pa.grad.data() + (i * q + j) * inner;
        for (std::size_t t = 0; t < inner; ++t) dst[t] += g[t];
      }
    }
  }));
}

// ---- indexing / shaping -------------------------------------------------------

inline Var reshape(const Var& a, std::vector<std::size_t> shape) {
  if (Tensor::numel_of(shape) != a.value().numel()) {
    throw ValidationError("reshape: numel mismatch");
  }
  Tensor out(std::move(shape));
  std::copy(a.value().data(), a.value().data() + a.value().numel(), out.data());
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) p.grad[i] += self.grad[i];
  }));
}

// a[i] along axis 0; drops the axis.
inline Var index_axis0(const Var& a, std::size_t i) {
  const auto& sh = a.value().shape();
  if (sh.empty() || i >= sh[0]) throw ValidationError("index_axis0: out of range");
  std::vector<std::size_t> osh(sh.begin() + 1, sh.end());
  const std::size_t inner = Tensor::numel_of(osh);
  Tensor out(osh);
  std::copy(a.value().data() + i * inner, a.value().data() + (i + 1) * inner, out.data());
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [i, inner](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t t = 0; t < inner; ++t) p.grad[i * inner + t] += self.grad[t];
  }));
}

// a[start:start+len] along axis 0; keeps the axis.
inline Var slice_axis0(const Var& a, std::size_t start, std::size_t len) {
  const auto& sh = a.value().shape();
  if (sh.empty() || start + len > sh[0]) throw ValidationError("slice_axis0: out of range");
  std::vector<std::size_t> osh = sh;
  osh[0] = len;
  std::size_t inner = 1;
  for (std::size_t i = 1; i < sh.size(); ++i) inner *= sh[i];
  Tensor out(osh);
  std::copy(a.value().data() + start * inner, a.value().data() + (start + len) * inner,
            out.data());
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [start, inner](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t t = 0; t < self.grad.numel(); ++t) {
      p.grad[start * inner + t] += self.grad[t];
    }
  }));
}

// Stack equal-shape tensors along a new leading axis.
inline Var stack_axis0(const std::vector<Var>& items) {
  if (items.empty()) throw ValidationError("stack_axis0: empty");
  const auto& sh = items[0].value().shape();
  std::vector<std::size_t> osh;
  osh.push_back(items.size());
  osh.insert(osh.end(), sh.begin(), sh.end());
  const std::size_t inner = items[0].value().numel();
  Tensor out(osh);
  std::vector<NodePtr> parents;
  parents.reserve(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!items[i].value().same_shape(items[0].value())) {
      throw ValidationError("stack_axis0: shape mismatch");
    }
    std::copy(items[i].value().data(), items[i].value().data() + inner,
              out.data() + i * inner);
    parents.push_back(items[i].node());
  }
  return Var::wrap(ag::make_op(std::move(out), std::move(parents), [inner](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (!p.requires_grad) continue;
      for (std::size_t t = 0; t < inner; ++t) p.grad[t] += self.grad[i * inner + t];
    }
  }));
}

// Concatenate along the existing first axis (same trailing shape).
inline Var concat_axis0(const std::vector<Var>& items) {
  if (items.empty()) throw ValidationError("concat_axis0: empty");
  const auto& sh0 = items[0].value().shape();
  if (sh0.empty()) throw ValidationError("concat_axis0: rank-0 input");
  std::size_t inner = 1;
  for (std::size_t i = 1; i < sh0.size(); ++i) inner *= sh0[i];
  std::size_t total = 0;
  for (const auto& v : items) {
    const auto& sh = v.value().shape();
    if (sh.size() != sh0.size() ||
        !std::equal(sh.begin() + 1, sh.end(), sh0.begin() + 1)) {
      throw ValidationError("concat_axis0: trailing shape mismatch");
    }
    total += sh[0];
  }
  std::vector<std::size_t> osh = sh0;
  osh[0] = total;
  Tensor out(osh);
  std::vector<NodePtr> parents;
  std::vector<std::size_t> sizes;
  std::size_t off = 0;
  for (const auto& v : items) {
    const std::size_t n = v.value().numel();
    std::copy(v.value().data(), v.value().data() + n, out.data() + off);
    off += n;
    parents.push_back(v.node());
    sizes.push_back(n);
  }
  return Var::wrap(ag::make_op(std::move(out), std::move(parents), [sizes](Node& self) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      Node& p = *self.parents[i];
      if (p.requires_grad) {
        for (std::size_t t = 0; t < sizes[i]; ++t) p.grad[t] += self.grad[off + t];
      }
      off += sizes[i];
    }
  }));
}

inline Var concat_lastdim(const Var& a, const Var& b) {
  if (a.value().ndim() != 2 || b.value().ndim() != 2 ||
      a.value().dim(0) != b.value().dim(0)) {
    throw ValidationError("concat_lastdim: expected [n,da],[n,db]");
  }
  const std::size_t n = a.value().dim(0), da = a.value().dim(1), db = b.value().dim(1);
  Tensor out({n, da + db});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < da; ++j) out.at2(i, j) = a.value().at2(i, j);
    for (std::size_t j = 0; j < db; ++j) out.at2(i, da + j) = b.value().at2(i, j);
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node(), b.node()},
                               [n, da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    for (std::size_t i = 0; i < n; ++i) {
      if (pa.requires_grad) {
        for (std::size_t j = 0; j < da; ++j) pa.grad.at2(i, j) += self.grad.at2(i, j);
      }
      if (pb.requires_grad) {
        for (std::size_t j = 0; j < db; ++j) pb.grad.at2(i, j) += self.grad.at2(i, da + j);
      }
    }
  }));
}

inline Var slice_lastdim(const Var& a, std::size_t start, std::size_t len) {
  if (a.value().ndim() != 2 || start + len > a.value().dim(1)) {
    throw ValidationError("slice_lastdim: out of range");
  }
  const std::size_t n = a.value().dim(0);
  Tensor out({n, len});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < len; ++j) out.at2(i, j) = a.value().at2(i, start + j);
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [n, start, len](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < len; ++j) {
        p.grad.at2(i, start + j) += self.grad.at2(i, j);
      }
    }
  }));
}

inline Var element(const Var& a, std::size_t flat_index) {
  if (flat_index >= a.value().numel()) throw ValidationError("element: out of range");
  Tensor out = Tensor::scalar(a.value()[flat_index]);
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [flat_index](Node& self) {
    Node& p = *self.parents[0];
    if (p.requires_grad) p.grad[flat_index] += self.grad[0];
  }));
}

// ---- reductions ----------------------------------------------------------------

inline Var sum_all(const Var& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.value().numel(); ++i) s += a.value()[i];
  return Var::wrap(ag::make_op(Tensor::scalar(s), {a.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < p.grad.numel(); ++i) p.grad[i] += self.grad[0];
  }));
}

inline Var mean_axis0(const Var& a) {
  const auto& sh = a.value().shape();
  if (sh.empty() || sh[0] == 0) throw ValidationError("mean_axis0: empty axis");
  const std::size_t n = sh[0];
  std::vector<std::size_t> osh(sh.begin() + 1, sh.end());
  const std::size_t inner = Tensor::numel_of(osh);
  Tensor out(osh);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t < inner; ++t) out[t] += a.value()[i * inner + t];
  }
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t t = 0; t < inner; ++t) out[t] *= inv;
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [n, inner, inv](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < inner; ++t) p.grad[i * inner + t] += inv * self.grad[t];
    }
  }));
}

// ---- elementwise unary ----------------------------------------------------------

namespace ag {

template <class F, class DF>
Var unary(const Var& a, F f, DF df) {
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(out[i]);
  return Var::wrap(make_op(std::move(out), {a.node()}, [df](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      p.grad[i] += df(p.value[i], self.value[i]) * self.grad[i];
    }
  }));
}

}  // namespace ag

inline Var log(const Var& a) {
  return ag::unary(a, [](double x) { return std::log(x); },
                   [](double x, double) { return 1.0 / x; });
}

inline Var exp(const Var& a) {
  return ag::unary(a, [](double x) { return std::exp(x); },
                   [](double, double y) { return y; });
}

inline Var sqrt(const Var& a) {
  return ag::unary(a, [](double x) { return std::sqrt(x); },
                   [](double, double y) { return 0.5 / y; });
}

inline Var sigmoid(const Var& a) {
  return ag::unary(a,
                   [](double x) {
                     return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                                     : std::exp(x) / (1.0 + std::exp(x));
                   },
                   [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& a) {
  return ag::unary(a, [](double x) { return std::tanh(x); },
                   [](double, double y) { return 1.0 - y * y; });
}

// Exact (erf-based) GELU; smooth everywhere, which keeps central finite
// differences honest in the gradient suites.
inline Var gelu(const Var& a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  return ag::unary(a,
                   [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
                   [](double x, double) {
                     const double phi = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
                     return phi + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
                   });
}

inline Var recip(const Var& a) {
  return ag::unary(a, [](double x) { return 1.0 / x; },
                   [](double x, double) { return -1.0 / (x * x); });
}

inline Var clamp(const Var& a, double lo, double hi) {
  return ag::unary(a,
                   [lo, hi](double x) { return std::min(hi, std::max(lo, x)); },
                   [lo, hi](double x, double) {
                     return (x >= lo && x <= hi) ? 1.0 : 0.0;
                   });
}

// ---- normalization / softmax ------------------------------------------------------

// Softmax along the last axis, applied independently per row.
inline Var softmax_lastdim(const Var& a) {
  const auto& sh = a.value().shape();
  if (sh.empty()) throw ValidationError("softmax_lastdim: rank-0");
  const std::size_t d = sh.back();
  const std::size_t rows = a.value().numel() / d;
  Tensor out = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = out.data() + r * d;
    double mx = p[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, p[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      p[j] = std::exp(p[j] - mx);
      s += p[j];
    }
    for (std::size_t j = 0; j < d; ++j) p[j] /= s;
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [rows, d](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += y[j] * g[j];
      for (std::size_t j = 0; j < d; ++j) p.grad[r * d + j] += y[j] * (g[j] - dot);
    }
  }));
}

// Zero-mean unit-variance normalization along the last axis (no affine).
inline Var layer_norm_lastdim(const Var& a, double eps = 1e-5) {
  const auto& sh = a.value().shape();
  if (sh.empty()) throw ValidationError("layer_norm_lastdim: rank-0");
  const std::size_t d = sh.back();
  const std::size_t rows = a.value().numel() / d;
  Tensor out = a.value();
  std::vector<double> inv_sigma(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = out.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += p[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_sigma[r] = inv;
    for (std::size_t j = 0; j < d; ++j) p[j] = (p[j] - mu) * inv;
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node()},
                               [rows, d, inv_sigma](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = self.value.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        mean_g += g[j];
        mean_gy += g[j] * y[j];
      }
      mean_g /= static_cast<double>(d);
      mean_gy /= static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        p.grad[r * d + j] += inv_sigma[r] * (g[j] - mean_g - y[j] * mean_gy);
      }
    }
  }));
}

// x / sqrt(|x|^2 + eps) along the last axis.
inline Var l2_normalize_lastdim(const Var& a, double eps = 1e-12) {
  const auto& sh = a.value().shape();
  if (sh.empty()) throw ValidationError("l2_normalize_lastdim: rank-0");
  const std::size_t d = sh.back();
  const std::size_t rows = a.value().numel() / d;
  Tensor out = a.value();
  std::vector<double> inv_r(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double* p = out.data() + r * d;
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += p[j] * p[j];
    const double inv = 1.0 / std::sqrt(s + eps);
    inv_r[r] = inv;
    for (std::size_t j = 0; j < d; ++j) p[j] *= inv;
  }
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [rows, d, inv_r](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = p.value.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double gx = 0.0;
      for (std::size_t j = 0; j < d; ++j) gx += g[j] * x[j];
      const double inv = inv_r[r];
      const double inv3 = inv * inv * inv;
      for (std::size_t j = 0; j < d; ++j) {
        p.grad[r * d + j] += g[j] * inv - x[j] * gx * inv3;
      }
    }
  }));
}

// Inverted dropout. In eval mode this is the identity.
inline Var dropout(const Var& a, double rate, Rng& rng, bool train) {
  if (!train || rate <= 0.0) return a;
  if (rate >= 1.0) throw ValidationError("dropout: rate must be < 1");
  const double keep = 1.0 - rate;
  Tensor mask(a.value().shape());
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    mask[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
  }
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= mask[i];
  return Var::wrap(ag::make_op(std::move(out), {a.node()}, [mask](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    for (std::size_t i = 0; i < self.grad.numel(); ++i) {
      p.grad[i] += mask[i] * self.grad[i];
    }
  }));
}

// ---- composites -----------------------------------------------------------------

inline Var dot(const Var& a, const Var& b) { return sum_all(mul(a, b)); }

inline Var mean_all(const Var& a) {
  return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.value().numel()));
}

// ---- backward -----------------------------------------------------------------

inline void backward(const Var& root) {
  if (!root.defined() || root.value().numel() != 1) {
    throw ValidationError("backward: root must be a defined scalar");
  }
  // Iterative post-order topological sort.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  visited.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next].get();
      ++next;
      if (visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  for (Node* n : order) {
    n->grad = Tensor(n->value.shape());
  }
  root.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->requires_grad) n->backprop(*n);
  }
}

}  // namespace ovvrd::nn
