#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "ovvrd/nn/modules.hpp"

namespace ovvrd::nn {

// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;
  };

  AdamW() = default;
  explicit AdamW(Options opts) : opts_(opts) {}

  void zero_grad(ParamMap& params) {
    for (auto& [name, v] : params.items) {
      v.grad() = Tensor(v.value().shape());
    }
  }

  void step(ParamMap& params, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& [name, v] : params.items) {
      Tensor& m = moment1_.try_emplace(name, Tensor(v.value().shape())).first->second;
      Tensor& s = moment2_.try_emplace(name, Tensor(v.value().shape())).first->second;
      const bool has_grad = v.grad().same_shape(v.value());
      Tensor& p = v.value();
      for (std::size_t i = 0; i < p.numel(); ++i) {
        const double g = has_grad ? v.grad()[i] : 0.0;
        m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g;
        s[i] = opts_.beta2 * s[i] + (1.0 - opts_.beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double shat = s[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(shat) + opts_.eps) + opts_.weight_decay * p[i]);
      }
    }
  }

  std::int64_t step_count() const { return t_; }
  void set_step_count(std::int64_t t) { t_ = t; }

  std::map<std::string, Tensor>& moment1() { return moment1_; }
  std::map<std::string, Tensor>& moment2() { return moment2_; }
  const std::map<std::string, Tensor>& moment1() const { return moment1_; }
  const std::map<std::string, Tensor>& moment2() const { return moment2_; }
  const Options& options() const { return opts_; }

 private:
  Options opts_;
  std::int64_t t_ = 0;
  std::map<std::string, Tensor> moment1_;
  std::map<std::string, Tensor> moment2_;
};

// Multi-step decay: lr(epoch) = base * factor^(#milestones passed), with
// epochs 1-indexed so the rate first drops at milestone+1.
inline double schedule_lr(double base_lr, const std::vector<int>& milestones,
                          double factor, int epoch) {
  double lr = base_lr;
  for (int m : milestones) {
    if (epoch > m) lr *= factor;
  }
  return lr;
}

}  // namespace ovvrd::nn
