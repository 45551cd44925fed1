#pragma once

#include <map>
#include <string>

#include "ovvrd/core/annotation.hpp"
#include "ovvrd/core/hash.hpp"
#include "ovvrd/encoders/provider.hpp"

namespace ovvrd::enc {

namespace detail {

inline nn::Tensor unit_vec_from_hash(std::uint64_t h, std::size_t d) {
  Rng rng(h);
  nn::Tensor v({d});
  for (std::size_t i = 0; i < d; ++i) v[i] = rng.normal();
  const double norm = v.l2_norm();
  if (norm < 1e-12) {
    v.fill(0.0);
    v[0] = 1.0;
    return v;
  }
  for (std::size_t i = 0; i < d; ++i) v[i] /= norm;
  return v;
}

}  // namespace detail

// Deterministic synthetic encoder. Text embeddings are seeded unit vectors
// combined over whitespace tokens; region embeddings carry a planted
// categorical signal recovered from annotations registered via plant(), plus
// a location-keyed noise component so distinct boxes stay distinguishable.
class SyntheticProvider : public EmbeddingProvider {
 public:
  SyntheticProvider(std::uint64_t seed, std::size_t d, std::size_t d_token)
      : seed_(seed) {
    d_ = d;
    d_token_ = d_token;
    start_vec_ = detail::unit_vec_from_hash(tag("start"), d_);
    if (d_token_ != d_) {
      token_proj_ = nn::Tensor({d_token_, d_});
      Rng rng(tag("proj"));
      const double scale = 1.0 / std::sqrt(static_cast<double>(d_token_));
      for (std::size_t i = 0; i < token_proj_.numel(); ++i) {
        token_proj_[i] = scale * rng.normal();
      }
    }
  }

  // Registers ground-truth annotations; region embeddings and captions for
  // this video key will carry the annotated categories as a planted signal.
  void plant(const VideoAnnotation& video) { planted_[video.video_id] = video; }

  nn::Tensor embed_text(const std::string& text) const override {
    const auto words = split_words(text);
    if (words.empty()) throw ValidationError("embed_text: empty string");
    nn::Tensor acc({d_});
    for (const auto& w : words) {
      const nn::Tensor v = detail::unit_vec_from_hash(fnv1a(tag("text"), w), d_);
      for (std::size_t i = 0; i < d_; ++i) acc[i] += v[i];
    }
    return renormalize(std::move(acc), fnv1a(tag("text-fallback"), text));
  }

  nn::Tensor token_embedding(const std::string& word) const override {
    if (word.empty()) throw ValidationError("token_embedding: empty word");
    return detail::unit_vec_from_hash(fnv1a(tag("token"), word), d_token_);
  }

  nn::Tensor embed_region(const std::string& video_key, int fid,
                          const BBox& box) const override {
    box.validate("embed_region");
    const nn::Tensor noise = detail::unit_vec_from_hash(region_key(video_key, fid, box), d_);
    nn::Tensor signal({d_});
    double total = 0.0;
    for_each_contained(video_key, fid, box, [&](const Tracklet& t, double weight) {
      const nn::Tensor c = embed_text(*t.category());
      for (std::size_t i = 0; i < d_; ++i) signal[i] += weight * c[i];
      total += weight;
    });
    if (total <= 0.0) return noise;
    nn::Tensor out = renormalize(std::move(signal), 0);
    for (std::size_t i = 0; i < d_; ++i) out[i] += kNoiseScale * noise[i];
    return renormalize(std::move(out), 0);
  }

  RegionCaption caption_region(const std::string& video_key, int fid,
                               const BBox& box) const override {
    box.validate("caption_region");
    // Largest contained annotated tracklets drive the caption.
    std::vector<std::pair<double, std::string>> cats;
    for_each_contained(video_key, fid, box, [&](const Tracklet& t, double weight) {
      cats.emplace_back(weight, *t.category());
    });
    std::sort(cats.begin(), cats.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::string text;
    if (cats.empty()) {
      text = "an empty region in the scene";
    } else if (cats.size() == 1) {
      text = "a " + cats[0].second + " in the scene";
    } else {
      text = "a " + cats[0].second + " and a " + cats[1].second + " in the scene";
    }
    return {fid, text};
  }

  std::uint64_t fingerprint() const override {
    std::uint64_t h = tag("fingerprint");
    h = fnv1a(h, static_cast<std::uint64_t>(d_));
    h = fnv1a(h, static_cast<std::uint64_t>(d_token_));
    h = start_vec_.fingerprint(h);
    if (!token_proj_.empty()) h = token_proj_.fingerprint(h);
    return h;
  }

 private:
  static constexpr double kNoiseScale = 0.25;

  std::uint64_t tag(std::string_view what) const {
    return fnv1a(fnv1a(kFnvOffset, seed_), what);
  }

  std::uint64_t region_key(const std::string& video_key, int fid, const BBox& box) const {
    std::uint64_t h = fnv1a(tag("region"), video_key);
    h = fnv1a(h, static_cast<std::int64_t>(fid));
    for (auto q : box.quantized()) h = fnv1a(h, q);
    return h;
  }

  nn::Tensor renormalize(nn::Tensor v, std::uint64_t fallback_hash) const {
    const double norm = v.l2_norm();
    if (norm < 1e-9) {
      return fallback_hash != 0 ? detail::unit_vec_from_hash(fallback_hash, d_)
                                : detail::unit_vec_from_hash(tag("degenerate"), d_);
    }
    for (std::size_t i = 0; i < v.numel(); ++i) v[i] /= norm;
    return v;
  }

  // Calls fn for every annotated tracklet on this frame that lies (nearly)
  // inside the query box, weighted by its share of the query area.
  template <class Fn>
  void for_each_contained(const std::string& video_key, int fid, const BBox& box,
                          Fn&& fn) const {
    auto it = planted_.find(video_key);
    if (it == planted_.end()) return;
    for (const auto& t : it->second.tracklets) {
      if (!t.covers(fid) || !t.category()) continue;
      const BBox& b = t.box(fid);
      const double inside = intersection_area(b, box) / b.area();
      if (inside < 0.9) continue;
      fn(t, std::min(1.0, b.area() / box.area()));
    }
  }

  std::uint64_t seed_ = 0;
  std::map<std::string, VideoAnnotation> planted_;
};

}  // namespace ovvrd::enc
