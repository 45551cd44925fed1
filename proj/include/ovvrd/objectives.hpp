#pragma once

#include <vector>

#include "ovvrd/nn/autograd.hpp"

namespace ovvrd {

// Per-component view of the composite objective. The decomposition
// total = gamma * l_obj_sub + l_rel + delta * l_int holds exactly.
struct LossBreakdown {
  double l_obj_sub = 0.0;
  double l_rel = 0.0;
  double l_int = 0.0;
  double total = 0.0;
  double gamma = 0.0;
  double delta = 0.0;
};

namespace objectives {

inline constexpr double kProbClamp = 1e-7;

// Softmax cross-entropy over tau-scaled similarity logits, computed in
// log-space with a constant max-shift for stability.
inline nn::Var cross_entropy_similarities(const nn::Var& sims, std::size_t target,
                                          double tau) {
  if (sims.value().ndim() != 1) {
    throw ValidationError("cross_entropy: expected a similarity row");
  }
  const std::size_t c = sims.value().numel();
  if (target >= c) {
    throw ValidationError("cross_entropy: ground-truth index " +
                          std::to_string(target) + " out of range [0," +
                          std::to_string(c) + ")");
  }
  if (tau <= 0.0) throw ValidationError("cross_entropy: tau must be positive");
  nn::Var z = nn::mul_scalar(sims, 1.0 / tau);
  double mx = z.value()[0];
  for (std::size_t i = 1; i < c; ++i) mx = std::max(mx, z.value()[i]);
  const nn::Var shifted = nn::add_scalar(z, -mx);
  const nn::Var lse = nn::log(nn::sum_all(nn::exp(shifted)));
  return nn::sub(lse, nn::element(shifted, target));
}

// Binary cross-entropy on probabilities, clamped at 1e-7 in log-space.
inline nn::Var bce(const nn::Var& prob, double y) {
  const nn::Var p = nn::clamp(prob, kProbClamp, 1.0 - kProbClamp);
  const nn::Var pos = nn::mul_scalar(nn::log(p), -y);
  const nn::Var neg_p = nn::add_scalar(nn::neg(p), 1.0);
  const nn::Var neg = nn::mul_scalar(nn::log(neg_p), -(1.0 - y));
  return nn::add(pos, neg);
}

}  // namespace objectives

// Eq. (12): CE(subject) + CE(object) over base-category similarity rows.
inline nn::Var loss_obj_sub(const nn::Var& pred_s, std::size_t y_s,
                            const nn::Var& pred_o, std::size_t y_o, double tau) {
  return nn::add(objectives::cross_entropy_similarities(pred_s, y_s, tau),
                 objectives::cross_entropy_similarities(pred_o, y_o, tau));
}

// Eq. (14): mean BCE over the base predicate categories only. y_rel is the
// multi-hot ground truth aligned with the score row.
inline nn::Var loss_rel(const nn::Var& scores, const std::vector<double>& y_rel) {
  if (scores.value().ndim() != 1 || scores.value().numel() != y_rel.size() ||
      y_rel.empty()) {
    throw ValidationError("loss_rel: score/label size mismatch");
  }
  for (std::size_t i = 0; i < scores.value().numel(); ++i) {
    const double p = scores.value()[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw ValidationError("loss_rel: score outside (0,1) at category " +
                            std::to_string(i));
    }
  }
  nn::Var acc;
  for (std::size_t i = 0; i < y_rel.size(); ++i) {
    nn::Var term = objectives::bce(nn::element(scores, i), y_rel[i]);
    acc = acc.defined() ? nn::add(acc, term) : term;
  }
  return nn::mul_scalar(acc, 1.0 / static_cast<double>(y_rel.size()));
}

// Eq. (15): mean BCE over the frames of the relation window.
inline nn::Var loss_int(const nn::Var& probs, const std::vector<double>& y_int) {
  if (probs.value().ndim() != 1 || probs.value().numel() != y_int.size() ||
      y_int.empty()) {
    throw ValidationError("loss_int: empty span or size mismatch");
  }
  for (std::size_t i = 0; i < probs.value().numel(); ++i) {
    const double p = probs.value()[i];
    if (!(p > 0.0 && p < 1.0)) {
      throw ValidationError("loss_int: probability outside (0,1) at frame " +
                            std::to_string(i));
    }
  }
  nn::Var acc;
  for (std::size_t i = 0; i < y_int.size(); ++i) {
    nn::Var term = objectives::bce(nn::element(probs, i), y_int[i]);
    acc = acc.defined() ? nn::add(acc, term) : term;
  }
  return nn::mul_scalar(acc, 1.0 / static_cast<double>(y_int.size()));
}

struct TotalLoss {
  nn::Var total;
  LossBreakdown breakdown;
};

// Eq. (10): L = gamma * L_obj&sub + L_rel + delta * L_int.
inline TotalLoss total_loss(const nn::Var& l_obj_sub_v, const nn::Var& l_rel_v,
                            const nn::Var& l_int_v, double gamma, double delta) {
  if (gamma < 0.0 || delta < 0.0) {
    throw ConfigError("total_loss: gamma/delta must be non-negative");
  }
  TotalLoss out;
  out.total = nn::add(nn::add(nn::mul_scalar(l_obj_sub_v, gamma), l_rel_v),
                      nn::mul_scalar(l_int_v, delta));
  out.breakdown.l_obj_sub = l_obj_sub_v.value().item();
  out.breakdown.l_rel = l_rel_v.value().item();
  out.breakdown.l_int = l_int_v.value().item();
  out.breakdown.gamma = gamma;
  out.breakdown.delta = delta;
  out.breakdown.total = gamma * out.breakdown.l_obj_sub + out.breakdown.l_rel +
                        delta * out.breakdown.l_int;
  return out;
}

}  // namespace ovvrd
