#pragma once

#include <cstdint>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "ovvrd/core/bbox.hpp"
#include "ovvrd/core/error.hpp"
#include "ovvrd/nn/autograd.hpp"

namespace ovvrd::enc {

struct RegionCaption {
  int fid = 0;
  std::string text;  // never empty
};

inline std::vector<std::string> split_words(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream iss(s);
  std::string w;
  while (iss >> w) out.push_back(w);
  return out;
}

// Frozen embedding provider: text embeddings, region visual embeddings and
// region captions. Every output is a pure function of the inputs plus the
// provider seed; nothing in here ever receives gradient updates.
//
// encode_tokens is the one differentiable entry point: it maps a prompt token
// sequence [L, d_token] to a unit feature [d] via a position-weighted sum
// (weight 1/(1+pos)) around a fixed start vector, then a frozen projection
// when d_token != d, then renormalization. Gradients flow to the tokens only.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  std::size_t dim() const { return d_; }
  std::size_t token_dim() const { return d_token_; }
  static constexpr std::size_t kMaxTokens = 77;

  virtual nn::Tensor embed_text(const std::string& text) const = 0;
  virtual nn::Tensor token_embedding(const std::string& word) const = 0;
  virtual nn::Tensor embed_region(const std::string& video_key, int fid,
                                  const BBox& box) const = 0;
  virtual RegionCaption caption_region(const std::string& video_key, int fid,
                                       const BBox& box) const = 0;
  virtual std::uint64_t fingerprint() const = 0;

  nn::Var encode_tokens(const nn::Var& tokens) const {
    const auto& sh = tokens.value().shape();
    if (sh.size() != 2 || sh[1] != d_token_) {
      throw ValidationError("encode_tokens: expected [L, d_token]");
    }
    const std::size_t len = sh[0];
    if (len < 1 || len > kMaxTokens) {
      throw ValidationError("encode_tokens: token count " + std::to_string(len) +
                            " outside [1," + std::to_string(kMaxTokens) + "]");
    }
    nn::Tensor w({1, len});
    for (std::size_t p = 0; p < len; ++p) w.at2(0, p) = 1.0 / (1.0 + static_cast<double>(p));
    nn::Var mixed = nn::matmul(nn::Var::constant(std::move(w)), tokens);  // [1,d_token]
    if (d_token_ != d_) {
      mixed = nn::matmul(mixed, nn::Var::constant(token_proj_));  // [1,d]
    }
    nn::Var z = nn::add(nn::reshape(mixed, {d_}), nn::Var::constant(start_vec_));
    return nn::l2_normalize_lastdim(z, 1e-12);
  }

  nn::Tensor encode_tokens(const nn::Tensor& tokens) const {
    return encode_tokens(nn::Var::constant(tokens)).value();
  }

 protected:
  std::size_t d_ = 0;
  std::size_t d_token_ = 0;
  nn::Tensor start_vec_;   // [d], frozen
  nn::Tensor token_proj_;  // [d_token, d], frozen; used only when dims differ
};

using ProviderPtr = std::shared_ptr<const EmbeddingProvider>;

}  // namespace ovvrd::enc
