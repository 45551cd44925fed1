#pragma once

#include <array>
#include <string>
#include <vector>

#include "ovvrd/core/error.hpp"
#include "ovvrd/encoders/provider.hpp"
#include "ovvrd/nn/modules.hpp"

namespace ovvrd {

// Fixed role order used across every [T,4,d] tensor in the pipeline.
enum Role : std::size_t { kSubject = 0, kObject = 1, kUnion = 2, kBackground = 3 };
inline constexpr std::size_t kNumRoles = 4;
inline constexpr const char* kRoleNames[kNumRoles] = {"subject", "object", "union",
                                                      "background"};

enum class AggregationManner { kCrossAttention, kSum, kConcat };

inline AggregationManner parse_manner(const std::string& s) {
  if (s == "cross_attention") return AggregationManner::kCrossAttention;
  if (s == "sum") return AggregationManner::kSum;
  if (s == "concat") return AggregationManner::kConcat;
  throw ConfigError("unknown aggregation manner '" + s + "'");
}

// Embeds the per-frame, per-role captions into the text tensor S [T,4,d].
// A missing caption is an error naming its (frame, role) slot.
inline nn::Tensor build_role_text(
    const std::vector<std::array<std::string, kNumRoles>>& captions,
    const enc::EmbeddingProvider& provider) {
  if (captions.empty()) throw ValidationError("build_role_text: no frames");
  const std::size_t t_count = captions.size(), d = provider.dim();
  nn::Tensor s({t_count, kNumRoles, d});
  for (std::size_t t = 0; t < t_count; ++t) {
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      if (captions[t][k].empty()) {
        throw ValidationError("build_role_text: missing caption at frame " +
                              std::to_string(t) + ", role " + kRoleNames[k]);
      }
      const nn::Tensor e = provider.embed_text(captions[t][k]);
      for (std::size_t j = 0; j < d; ++j) s.at3(t, k, j) = e[j];
    }
  }
  return s;
}

// Visual-text aggregation: temporal self-attention over the caption features,
// per-frame dot cross-attention from visual role tokens into the text tokens,
// spatial global normalization, and a feed-forward refinement. The sum /
// concat manners instead fuse with a per-token projection initialized to an
// identity-like map so the ablations start from comparable outputs.
class VisualTextAggregator {
 public:
  VisualTextAggregator() = default;

  VisualTextAggregator(std::size_t d, std::size_t n_heads, double dropout_rate,
                       Rng& rng)
      : d_(d),
        dropout_(dropout_rate),
        text_block_(d, n_heads, 2 * d, rng),
        cross_(d, n_heads, rng),
        ffn_ln_(d),
        ffn1_(d, 2 * d, rng),
        ffn2_(2 * d, d, rng),
        sum_proj_(nn::Linear::identity_like(d, d)),
        concat_proj_(nn::Linear::identity_like(2 * d, d)) {}

  // Self-attention along the time axis, independently per role, parameters
  // shared across the four roles. No positional encodings here, so the block
  // is frame-permutation equivariant by construction.
  nn::Var text_self_attention(const nn::Var& s, Rng& rng, bool train) const {
    check_role_tensor(s, "text_self_attention");
    const nn::Var by_role = nn::swap01(s);  // [4,T,d]
    std::vector<nn::Var> out;
    out.reserve(kNumRoles);
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      out.push_back(text_block_(nn::index_axis0(by_role, k), rng, train, dropout_));
    }
    return nn::swap01(nn::stack_axis0(out));  // [T,4,d]
  }

  nn::Var aggregate(const nn::Var& f_v, const nn::Var& s, AggregationManner manner,
                    Rng& rng, bool train) const {
    check_role_tensor(f_v, "aggregate");
    if (!f_v.value().same_shape(s.value())) {
      throw ValidationError("aggregate: visual/text shape mismatch");
    }
    const std::size_t t_count = f_v.value().dim(0);
    switch (manner) {
      case AggregationManner::kSum:
        return project_tokens(nn::add(f_v, s), sum_proj_);
      case AggregationManner::kConcat: {
        std::vector<nn::Var> frames;
        frames.reserve(t_count);
        for (std::size_t t = 0; t < t_count; ++t) {
          frames.push_back(concat_proj_(nn::concat_lastdim(nn::index_axis0(f_v, t),
                                                           nn::index_axis0(s, t))));
        }
        return nn::stack_axis0(frames);
      }
      case AggregationManner::kCrossAttention: {
        std::vector<nn::Var> frames;
        frames.reserve(t_count);
        for (std::size_t t = 0; t < t_count; ++t) {
          const nn::Var fv_t = nn::index_axis0(f_v, t);  // [4,d]
          const nn::Var s_t = nn::index_axis0(s, t);
          nn::Var h = nn::add(fv_t, nn::dropout(cross_(fv_t, s_t, rng, train, dropout_),
                                                dropout_, rng, train));
          h = spatial_global_norm(h);
          h = nn::add(h, nn::dropout(ffn2_(nn::gelu(ffn1_(ffn_ln_(h)))), dropout_, rng,
                                     train));
          frames.push_back(h);
        }
        return nn::stack_axis0(frames);
      }
    }
    throw ConfigError("aggregate: unknown manner");
  }

  // Attention rows of the most recent cross-attention frame, per head.
  const std::vector<nn::Tensor>& last_cross_attention() const {
    return cross_.last_attention();
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    text_block_.collect(prefix + ".text_block", params);
    cross_.collect(prefix + ".cross", params);
    ffn_ln_.collect(prefix + ".ffn_ln", params);
    ffn1_.collect(prefix + ".ffn1", params);
    ffn2_.collect(prefix + ".ffn2", params);
    sum_proj_.collect(prefix + ".sum_proj", params);
    concat_proj_.collect(prefix + ".concat_proj", params);
  }

 private:
  static void check_role_tensor(const nn::Var& v, const char* op) {
    const auto& sh = v.value().shape();
    if (sh.size() != 3 || sh[1] != kNumRoles) {
      throw ValidationError(std::string(op) + ": expected [T,4,d], got " +
                            v.value().shape_str());
    }
  }

  // Mean-center across the four roles, then normalize each feature channel
  // across the role axis.
  static nn::Var spatial_global_norm(const nn::Var& x /*[4,d]*/) {
    return nn::transpose(nn::layer_norm_lastdim(nn::transpose(x)));
  }

  nn::Var project_tokens(const nn::Var& x /*[T,4,d]*/, const nn::Linear& proj) const {
    const std::size_t t_count = x.value().dim(0);
    std::vector<nn::Var> frames;
    frames.reserve(t_count);
    for (std::size_t t = 0; t < t_count; ++t) {
      frames.push_back(proj(nn::index_axis0(x, t)));
    }
    return nn::stack_axis0(frames);
  }

  std::size_t d_ = 0;
  double dropout_ = 0.0;
  nn::TransformerLayer text_block_;
  nn::MultiHeadAttention cross_;
  nn::LayerNorm ffn_ln_;
  nn::Linear ffn1_, ffn2_;
  nn::Linear sum_proj_, concat_proj_;
};

}  // namespace ovvrd
