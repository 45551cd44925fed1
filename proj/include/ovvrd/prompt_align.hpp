#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ovvrd/encoders/provider.hpp"
#include "ovvrd/nn/modules.hpp"
#include "ovvrd/vt_aggregation.hpp"

namespace ovvrd {

enum class PromptVariant { kHand, kContinuous, kConditional, kMixed };

inline PromptVariant parse_prompt_variant(const std::string& s) {
  if (s == "hand") return PromptVariant::kHand;
  if (s == "continuous") return PromptVariant::kContinuous;
  if (s == "conditional") return PromptVariant::kConditional;
  if (s == "mixed") return PromptVariant::kMixed;
  throw ConfigError("unknown prompt variant '" + s + "'");
}

enum class AdapterPlacement { kVisual, kText, kBoth, kNone };

inline AdapterPlacement parse_adapter_placement(const std::string& s) {
  if (s == "visual") return AdapterPlacement::kVisual;
  if (s == "text") return AdapterPlacement::kText;
  if (s == "both") return AdapterPlacement::kBoth;
  if (s == "none") return AdapterPlacement::kNone;
  throw ConfigError("unknown adapter placement '" + s + "'");
}

// Hand-crafted prompt templates per role; [CLS] is replaced by the relation
// category words.
inline std::string hand_template_for_role(std::size_t role) {
  switch (role) {
    case kSubject:
      return "An image of a person or object [CLS] something";
    case kObject:
      return "An image of something [CLS] a person or object";
    default:
      return "An image of the visual relation [CLS] between two entities";
  }
}

inline std::string object_hand_template() { return "a photo of [CLS]"; }

inline std::vector<std::string> expand_template(const std::string& templ,
                                                const std::string& category) {
  std::vector<std::string> words;
  for (const auto& w : enc::split_words(templ)) {
    if (w == "[CLS]") {
      for (const auto& cw : enc::split_words(category)) words.push_back(cw);
    } else {
      words.push_back(w);
    }
  }
  return words;
}

// Per-role learnable context tokens plus frozen per-category class tokens and
// hand-crafted prompt token sequences. Context is shared across categories
// within a role; class and hand tokens never receive gradients.
class PromptSet {
 public:
  PromptSet() = default;

  PromptSet(const enc::EmbeddingProvider& provider,
            const std::vector<std::string>& categories, std::size_t m_tokens,
            double cls_fraction, Rng& rng)
      : m_tokens_(m_tokens), cls_fraction_(cls_fraction) {
    if (m_tokens_ < 1) throw ConfigError("prompt.m_tokens must be >= 1");
    if (cls_fraction_ < 0.0 || cls_fraction_ > 1.0) {
      throw ConfigError("prompt.cls_fraction must lie in [0,1]");
    }
    const std::size_t dt = provider.token_dim();
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      context_[k] = nn::Var::param(nn::rand_uniform({m_tokens_, dt}, rng, 0.1));
    }
    for (const auto& cat : categories) {
      // Class token: mean of the category's word tokens, renormalized.
      nn::Tensor acc({dt});
      const auto words = enc::split_words(cat);
      if (words.empty()) throw ValidationError("prompt: empty category name");
      for (const auto& w : words) {
        const nn::Tensor t = provider.token_embedding(w);
        for (std::size_t j = 0; j < dt; ++j) acc[j] += t[j];
      }
      const double norm = acc.l2_norm();
      for (std::size_t j = 0; j < dt; ++j) acc[j] /= norm;
      class_tokens_[cat] = acc;

      // Hand-crafted sequences, padded / truncated to M+1 so they mix
      // token-by-token with the learnable prompt.
      for (std::size_t k = 0; k < kNumRoles; ++k) {
        const auto hw = expand_template(hand_template_for_role(k), cat);
        nn::Tensor seq({m_tokens_ + 1, dt});
        for (std::size_t p = 0; p < std::min(hw.size(), m_tokens_ + 1); ++p) {
          const nn::Tensor t = provider.token_embedding(hw[p]);
          for (std::size_t j = 0; j < dt; ++j) seq.at2(p, j) = t[j];
        }
        hand_tokens_[k][cat] = std::move(seq);
      }
    }
  }

  std::size_t m_tokens() const { return m_tokens_; }
  double cls_fraction() const { return cls_fraction_; }

  std::size_t class_index() const {
    return static_cast<std::size_t>(
        std::llround(cls_fraction_ * static_cast<double>(m_tokens_)));
  }

  const nn::Tensor& class_token(const std::string& category) const {
    auto it = class_tokens_.find(category);
    if (it == class_tokens_.end()) {
      throw ValidationError("prompt: unknown category '" + category + "'");
    }
    return it->second;
  }

  const nn::Tensor& hand_sequence(std::size_t role, const std::string& category) const {
    if (role >= kNumRoles) throw ValidationError("prompt: bad role");
    auto it = hand_tokens_[role].find(category);
    if (it == hand_tokens_[role].end()) {
      throw ValidationError("prompt: unknown category '" + category + "'");
    }
    return it->second;
  }

  nn::Var context(std::size_t role) const {
    if (role >= kNumRoles) throw ValidationError("prompt: bad role");
    return context_[role];
  }

  // Token sequence [M+1, d_token]: M shared context tokens with the class
  // token inserted at round(cls_fraction * M).
  nn::Var build_prompt(std::size_t role, const std::string& category) const {
    return assemble(context(role), class_token(category));
  }

  nn::Var assemble(const nn::Var& context, const nn::Tensor& cls) const {
    const std::size_t idx = class_index();
    const nn::Var cls_row =
        nn::Var::constant(nn::Tensor({1, cls.numel()},
                                     std::vector<double>(cls.data(), cls.data() + cls.numel())));
    std::vector<nn::Var> parts;
    if (idx > 0) parts.push_back(nn::slice_axis0(context, 0, idx));
    parts.push_back(cls_row);
    if (idx < m_tokens_) parts.push_back(nn::slice_axis0(context, idx, m_tokens_ - idx));
    return nn::concat_axis0(parts);
  }

  std::uint64_t frozen_fingerprint() const {
    std::uint64_t h = fnv1a(kFnvOffset, "prompt-frozen");
    for (const auto& [cat, tok] : class_tokens_) {
      h = fnv1a(h, cat);
      h = tok.fingerprint(h);
    }
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      for (const auto& [cat, seq] : hand_tokens_[k]) {
        h = fnv1a(h, cat);
        h = seq.fingerprint(h);
      }
    }
    return h;
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      params.add(prefix + ".context." + kRoleNames[k], context_[k]);
    }
  }

 private:
  std::size_t m_tokens_ = 0;
  double cls_fraction_ = 0.75;
  std::array<nn::Var, kNumRoles> context_;
  std::map<std::string, nn::Tensor> class_tokens_;
  std::array<std::map<std::string, nn::Tensor>, kNumRoles> hand_tokens_;
};

// Small bottleneck map from the pooled pair feature to a mixing coefficient
// in [0,1]; initialized so alpha starts at 0.5.
class AlphaGate {
 public:
  AlphaGate() = default;

  AlphaGate(std::size_t d, Rng& rng)
      : w1_(d, std::max<std::size_t>(d / 4, 2), rng),
        w2_(nn::Linear::zeros(std::max<std::size_t>(d / 4, 2), 1)) {}

  nn::Var operator()(const nn::Var& x /*[d]*/) const {
    return nn::reshape(nn::sigmoid(w2_.vec(nn::gelu(w1_.vec(x)))), {});
  }

  double value(const nn::Tensor& x) const {
    return (*this)(nn::Var::constant(x)).value().item();
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    w1_.collect(prefix + ".w1", params);
    w2_.collect(prefix + ".w2", params);
  }

 private:
  nn::Linear w1_, w2_;
};

// Residual bottleneck adapter: out = in + gate * BN(act(W_up act(W_down in))).
// The gate starts at zero, so the adapter is an exact identity at init.
class Adapter {
 public:
  Adapter() = default;

  Adapter(std::size_t d, std::size_t bottleneck, Rng& rng)
      : down_(d, bottleneck, rng), up_(bottleneck, d, rng), norm_(d),
        gate_(nn::Var::param(nn::Tensor::scalar(0.0))) {}

  nn::Var operator()(const nn::Var& x, bool train) const {
    nn::Var h = nn::gelu(apply_linear(down_, x));
    h = nn::gelu(apply_linear(up_, h));
    h = norm_(h, train);
    return nn::add(x, nn::scale(h, gate_));
  }

  nn::Var& gate() { return gate_; }
  nn::Linear& down() { return down_; }
  nn::FrozenNorm& norm() { return norm_; }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    down_.collect(prefix + ".down", params);
    up_.collect(prefix + ".up", params);
    norm_.collect(prefix + ".norm", params);
    params.add(prefix + ".gate", gate_);
  }

 private:
  static nn::Var apply_linear(const nn::Linear& lin, const nn::Var& x) {
    return x.value().ndim() == 1 ? lin.vec(x) : lin(x);
  }

  nn::Linear down_, up_;
  nn::FrozenNorm norm_;
  nn::Var gate_;
};

// Prompt construction, dynamic mixing with hand-crafted prompts, adapters,
// and the similarity heads for object and relation scoring.
class PromptAligner {
 public:
  PromptAligner() = default;

  PromptAligner(enc::ProviderPtr provider, const std::vector<std::string>& rel_categories,
                std::size_t m_tokens, double cls_fraction, std::size_t adapter_bottleneck,
                Rng& rng)
      : provider_(std::move(provider)),
        prompts_(*provider_, rel_categories, m_tokens, cls_fraction, rng),
        gate_(provider_->dim(), rng),
        meta_w1_(provider_->dim(), std::max<std::size_t>(provider_->dim() / 4, 2), rng),
        meta_w2_(nn::Linear::zeros(std::max<std::size_t>(provider_->dim() / 4, 2),
                                   provider_->token_dim())),
        visual_adapter_(provider_->dim(), adapter_bottleneck, rng),
        text_adapter_(provider_->dim(), adapter_bottleneck, rng) {}

  const PromptSet& prompts() const { return prompts_; }
  PromptSet& prompts() { return prompts_; }
  Adapter& visual_adapter() { return visual_adapter_; }
  Adapter& text_adapter() { return text_adapter_; }
  const AlphaGate& alpha_gate() const { return gate_; }

  // Test/ablation hook: pins alpha to an exact endpoint value.
  void force_alpha(std::optional<double> v) { forced_alpha_ = v; }

  // Eqs. (8)-(9): build the token sequence for (role, category) under the
  // chosen variant and push it through the frozen text encoder.
  nn::Var mix_and_encode(std::size_t role, const std::string& category,
                         const nn::Var& x_pooled, PromptVariant variant) const {
    switch (variant) {
      case PromptVariant::kHand:
        return provider_->encode_tokens(
            nn::Var::constant(prompts_.hand_sequence(role, category)));
      case PromptVariant::kContinuous:
        return provider_->encode_tokens(prompts_.build_prompt(role, category));
      case PromptVariant::kConditional: {
        require_pooled(x_pooled, "conditional");
        const nn::Var shift = meta_w2_.vec(nn::gelu(meta_w1_.vec(x_pooled)));
        const nn::Var shifted = nn::add_rowvec(prompts_.context(role), shift);
        return provider_->encode_tokens(
            prompts_.assemble(shifted, prompts_.class_token(category)));
      }
      case PromptVariant::kMixed: {
        nn::Var alpha;
        if (forced_alpha_) {
          alpha = nn::Var::constant(nn::Tensor::scalar(*forced_alpha_));
        } else {
          require_pooled(x_pooled, "mixed");
          alpha = gate_(x_pooled);
        }
        const nn::Var one_minus = nn::add_scalar(nn::neg(alpha), 1.0);
        const nn::Var mixed =
            nn::add(nn::scale(prompts_.build_prompt(role, category), alpha),
                    nn::scale(nn::Var::constant(prompts_.hand_sequence(role, category)),
                              one_minus));
        return provider_->encode_tokens(mixed);
      }
    }
    throw ConfigError("mix_and_encode: unknown variant");
  }

  // Eqs. (5)-(6) / Table VI. `which` selects where the adapters sit; shape is
  // always preserved and `none` is the identity.
  nn::Var adapt(const nn::Var& features, AdapterPlacement which, bool is_visual,
                bool train) const {
    switch (which) {
      case AdapterPlacement::kNone:
        return features;
      case AdapterPlacement::kVisual:
        return is_visual ? visual_adapter_(features, train) : features;
      case AdapterPlacement::kText:
        return is_visual ? features : text_adapter_(features, train);
      case AdapterPlacement::kBoth:
        return is_visual ? visual_adapter_(features, train)
                         : text_adapter_(features, train);
    }
    throw ConfigError("adapt: unknown placement");
  }

  std::uint64_t frozen_fingerprint() const {
    return fnv1a(prompts_.frozen_fingerprint(), provider_->fingerprint());
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    prompts_.collect(prefix + ".prompts", params);
    gate_.collect(prefix + ".alpha_gate", params);
    meta_w1_.collect(prefix + ".meta.w1", params);
    meta_w2_.collect(prefix + ".meta.w2", params);
    visual_adapter_.collect(prefix + ".adapter_v", params);
    text_adapter_.collect(prefix + ".adapter_t", params);
  }

 private:
  static void require_pooled(const nn::Var& x, const char* variant) {
    if (!x.defined()) {
      throw ValidationError(std::string("mix_and_encode: variant '") + variant +
                            "' needs the pooled visual feature");
    }
  }

  enc::ProviderPtr provider_;
  PromptSet prompts_;
  AlphaGate gate_;
  nn::Linear meta_w1_, meta_w2_;
  Adapter visual_adapter_;
  Adapter text_adapter_;
  std::optional<double> forced_alpha_;
};

// Eq. (11): per-category cosine similarity between the pooled visual feature
// and the category text features; both sides unit-norm.
inline nn::Var score_objects(const nn::Var& v_pooled /*[d]*/,
                             const nn::Var& category_texts /*[C,d]*/) {
  const std::size_t d = v_pooled.value().numel();
  if (category_texts.value().ndim() != 2 || category_texts.value().dim(1) != d) {
    throw ValidationError("score_objects: shape mismatch");
  }
  const std::size_t c = category_texts.value().dim(0);
  return nn::reshape(nn::matmul(category_texts, nn::reshape(v_pooled, {d, 1})), {c});
}

// Eq. (13): the role unions are realized as concatenation along the feature
// axis followed by renormalization, so the cosine stays well defined.
inline nn::Var fuse_roles(const std::array<nn::Var, kNumRoles>& roles) {
  std::vector<nn::Var> parts;
  for (std::size_t k = 0; k < kNumRoles; ++k) {
    if (!roles[k].defined()) {
      throw ValidationError(std::string("fuse_roles: missing role ") + kRoleNames[k]);
    }
    parts.push_back(roles[k]);
  }
  return nn::l2_normalize_lastdim(nn::concat_axis0(parts), 1e-12);
}

inline nn::Var relation_cosine(const std::array<nn::Var, kNumRoles>& v_roles,
                               const std::array<nn::Var, kNumRoles>& t_roles) {
  return nn::dot(fuse_roles(v_roles), fuse_roles(t_roles));
}

inline nn::Var score_relations(const std::array<nn::Var, kNumRoles>& v_roles,
                               const std::array<nn::Var, kNumRoles>& t_roles) {
  return nn::sigmoid(relation_cosine(v_roles, t_roles));
}

// Frozen object-category text features from the hand-crafted template,
// stacked into [C,d].
inline nn::Tensor object_text_features(const enc::EmbeddingProvider& provider,
                                       const std::vector<std::string>& categories) {
  nn::Tensor out({categories.size(), provider.dim()});
  for (std::size_t i = 0; i < categories.size(); ++i) {
    const auto words = expand_template(object_hand_template(), categories[i]);
    nn::Tensor seq({words.size(), provider.token_dim()});
    for (std::size_t p = 0; p < words.size(); ++p) {
      const nn::Tensor t = provider.token_embedding(words[p]);
      for (std::size_t j = 0; j < provider.token_dim(); ++j) seq.at2(p, j) = t[j];
    }
    const nn::Tensor e = provider.encode_tokens(seq);
    for (std::size_t j = 0; j < provider.dim(); ++j) out.at2(i, j) = e[j];
  }
  return out;
}

}  // namespace ovvrd
