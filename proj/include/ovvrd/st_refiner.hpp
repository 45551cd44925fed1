#pragma once

#include <array>
#include <string>
#include <vector>

#include "ovvrd/nn/modules.hpp"
#include "ovvrd/vt_aggregation.hpp"

namespace ovvrd {

// Learnable role and temporal embeddings plus fixed sinusoidal positional
// encodings over the (frame, role) grid.
struct EmbeddingTables {
  nn::Var role_emb;   // [4,d] learnable
  nn::Var time_emb;   // [T_max,d] learnable
  std::size_t t_max = 0;
  std::size_t d = 0;

  EmbeddingTables() = default;

  EmbeddingTables(std::size_t d_in, std::size_t t_max_in, Rng& rng)
      : t_max(t_max_in), d(d_in) {
    role_emb = nn::Var::param(nn::rand_uniform({kNumRoles, d}, rng, 0.1));
    time_emb = nn::Var::param(nn::rand_uniform({t_max, d}, rng, 0.1));
  }

  // P for one frame: sinusoidal encoding of the flattened grid index t*4+k.
  nn::Tensor positional(std::size_t t) const {
    nn::Tensor p({kNumRoles, d});
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      const double pos = static_cast<double>(t * kNumRoles + k);
      for (std::size_t j = 0; j < d; ++j) {
        const double freq =
            std::pow(10000.0, -2.0 * static_cast<double>(j / 2) / static_cast<double>(d));
        p.at2(k, j) = (j % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
      }
    }
    return p;
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    params.add(prefix + ".role_emb", role_emb);
    params.add(prefix + ".time_emb", time_emb);
  }
};

struct RefinedFeatures {
  nn::Var per_role;                     // [T,4,d] temporally refined tokens
  nn::Var role_sum;                     // [T,d] sum over roles (relation head input)
  std::array<nn::Var, kNumRoles> pooled;  // time-averaged per-role summaries [d]
};

// Arithmetic mean over the time axis of one role's tokens.
inline nn::Var time_avg_pool(const nn::Var& v /*[T,4,d]*/, std::size_t role) {
  if (role >= kNumRoles) throw ValidationError("time_avg_pool: bad role");
  return nn::mean_axis0(nn::index_axis0(nn::swap01(v), role));
}

// Spatial transformer across the four role tokens per frame, followed by a
// temporal transformer across frames per role.
class SpatioTemporalRefiner {
 public:
  SpatioTemporalRefiner() = default;

  SpatioTemporalRefiner(std::size_t d, std::size_t n_heads, std::size_t n_layers,
                        std::size_t t_max, double dropout_rate, Rng& rng)
      : dropout_(dropout_rate), tables_(d, t_max, rng) {
    for (std::size_t l = 0; l < n_layers; ++l) {
      spatial_.emplace_back(d, n_heads, 2 * d, rng);
      temporal_.emplace_back(d, n_heads, 2 * d, rng);
    }
  }

  const EmbeddingTables& tables() const { return tables_; }
  EmbeddingTables& tables() { return tables_; }
  std::vector<nn::TransformerLayer>& spatial_layers() { return spatial_; }
  std::vector<nn::TransformerLayer>& temporal_layers() { return temporal_; }

  // Per frame t: tokens x_k = f_vt[t,k] + R_k + P_k + M[t] (motion broadcast
  // to every role), refined by self-attention across the four roles.
  nn::Var spatial_refine(const nn::Var& f_vt /*[T,4,d]*/,
                         const nn::Var& motion /*[T,d]*/, Rng& rng, bool train) const {
    const auto& sh = f_vt.value().shape();
    if (sh.size() != 3 || sh[1] != kNumRoles) {
      throw ValidationError("spatial_refine: expected [T,4,d]");
    }
    if (motion.value().ndim() != 2 || motion.value().dim(0) != sh[0] ||
        motion.value().dim(1) != sh[2]) {
      throw ValidationError("spatial_refine: motion shape mismatch");
    }
    const std::size_t t_count = sh[0];
    std::vector<nn::Var> frames;
    frames.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      nn::Var x = nn::add(nn::index_axis0(f_vt, t), tables_.role_emb);
      x = nn::add(x, nn::Var::constant(tables_.positional(t)));
      // motion[t] broadcast over roles: [4,d] rows all get the same vector
      x = nn::add_rowvec(x, nn::index_axis0(motion, t));
      for (const auto& layer : spatial_) x = layer(x, rng, train, dropout_);
      frames.push_back(x);
    }
    return nn::stack_axis0(frames);
  }

  // Per role k: the T tokens plus temporal embeddings pass through the
  // temporal transformer. Exposes the per-role tokens, their role sum, and
  // the time-averaged per-role summaries.
  RefinedFeatures temporal_refine(const nn::Var& v /*[T,4,d]*/, Rng& rng,
                                  bool train) const {
    const auto& sh = v.value().shape();
    if (sh.size() != 3 || sh[1] != kNumRoles) {
      throw ValidationError("temporal_refine: expected [T,4,d]");
    }
    const std::size_t t_count = sh[0];
    if (t_count > tables_.t_max) {
      throw ValidationError("temporal_refine: T=" + std::to_string(t_count) +
                            " exceeds t_max=" + std::to_string(tables_.t_max));
    }
    const nn::Var by_role = nn::swap01(v);  // [4,T,d]
    const nn::Var t_emb = nn::slice_axis0(tables_.time_emb, 0, t_count);
    std::vector<nn::Var> roles;
    roles.reserve(kNumRoles);
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      nn::Var x = nn::add(nn::index_axis0(by_role, k), t_emb);
      for (const auto& layer : temporal_) x = layer(x, rng, train, dropout_);
      roles.push_back(x);  // [T,d]
    }
    RefinedFeatures out;
    out.per_role = nn::swap01(nn::stack_axis0(roles));  // [T,4,d]
    out.role_sum = nn::add(nn::add(roles[0], roles[1]), nn::add(roles[2], roles[3]));
    for (std::size_t k = 0; k < kNumRoles; ++k) out.pooled[k] = nn::mean_axis0(roles[k]);
    return out;
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    tables_.collect(prefix + ".tables", params);
    for (std::size_t l = 0; l < spatial_.size(); ++l) {
      spatial_[l].collect(prefix + ".spatial.l" + std::to_string(l), params);
      temporal_[l].collect(prefix + ".temporal.l" + std::to_string(l), params);
    }
  }

 private:
  double dropout_ = 0.0;
  EmbeddingTables tables_;
  std::vector<nn::TransformerLayer> spatial_;
  std::vector<nn::TransformerLayer> temporal_;
};

}  // namespace ovvrd
