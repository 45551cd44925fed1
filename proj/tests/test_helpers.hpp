#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ovvrd/nn/autograd.hpp"
#include "ovvrd/nn/modules.hpp"

namespace ovvrd::testing {

inline nn::Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng,
                                double scale = 1.0) {
  nn::Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = scale * rng.normal();
  return t;
}

// Central finite differences of a scalar-valued rebuild function with respect
// to one coordinate of `theta`. The function must rebuild the graph from the
// current tensor contents on every call.
inline double fd_grad(nn::Tensor& theta, std::size_t idx,
                      const std::function<double()>& eval, double h = 1e-5) {
  const double orig = theta[idx];
  theta[idx] = orig + h;
  const double fp = eval();
  theta[idx] = orig - h;
  const double fm = eval();
  theta[idx] = orig;
  return (fp - fm) / (2.0 * h);
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
};

// Compares analytic gradients (already accumulated in `param.grad()`) against
// finite differences on a deterministic subset of coordinates.
inline GradCheckResult check_gradient(nn::Var& param,
                                      const std::function<double()>& eval,
                                      std::size_t max_coords, std::uint64_t seed,
                                      double h = 1e-5) {
  GradCheckResult res;
  const std::size_t n = param.value().numel();
  std::vector<std::size_t> coords;
  if (n <= max_coords) {
    for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
  } else {
    Rng rng(seed);
    for (std::size_t i = 0; i < max_coords; ++i) coords.push_back(rng.index(n));
  }
  for (std::size_t idx : coords) {
    const double analytic = param.grad()[idx];
    const double numeric = fd_grad(param.value(), idx, eval, h);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
    res.max_rel_err = std::max(res.max_rel_err, std::abs(analytic - numeric) / denom);
    ++res.checked;
  }
  return res;
}

}  // namespace ovvrd::testing
