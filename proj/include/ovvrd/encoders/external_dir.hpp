#pragma once

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "ovvrd/core/json_io.hpp"
#include "ovvrd/encoders/synthetic.hpp"

namespace ovvrd::enc {

// Provider backed by a directory of precomputed embeddings, keyed by
// (video_id, fid, quantized box). Layout:
//
//   meta.json                {"d": int, "d_token": int, "seed": int}
//   text_embeddings.json     {text: [d doubles]}
//   token_embeddings.json    {word: [d_token doubles]}   (optional)
//   regions/<video_id>.json  {"fid:x1,y1,x2,y2": [d doubles]}
//   captions/<video_id>.json {"fid:x1,y1,x2,y2": "caption"}
//
// Lookups are strict: a missing key is an error, not a fallback. Token
// embeddings fall back to the seeded construction when the file is absent,
// since prompt tuning only needs a deterministic frozen token space.
class ExternalDirProvider : public EmbeddingProvider {
 public:
  explicit ExternalDirProvider(const std::string& dir) : dir_(dir) {
    namespace fs = std::filesystem;
    const json meta = ovvrd::detail::read_json_file((fs::path(dir) / "meta.json").string());
    d_ = meta.at("d").get<std::size_t>();
    d_token_ = meta.at("d_token").get<std::size_t>();
    seed_ = meta.value("seed", std::uint64_t{0});
    start_vec_ = detail::unit_vec_from_hash(fnv1a(fnv1a(kFnvOffset, seed_), "start"), d_);
    if (d_token_ != d_) {
      token_proj_ = nn::Tensor({d_token_, d_});
      Rng rng(fnv1a(fnv1a(kFnvOffset, seed_), "proj"));
      const double scale = 1.0 / std::sqrt(static_cast<double>(d_token_));
      for (std::size_t i = 0; i < token_proj_.numel(); ++i) {
        token_proj_[i] = scale * rng.normal();
      }
    }
    text_ = load_vector_map((fs::path(dir) / "text_embeddings.json").string(), d_);
    const auto tok_path = fs::path(dir) / "token_embeddings.json";
    if (fs::exists(tok_path)) {
      tokens_ = load_vector_map(tok_path.string(), d_token_);
      have_token_file_ = true;
    }
    for (const char* sub : {"regions", "captions"}) {
      const fs::path p = fs::path(dir) / sub;
      if (!fs::exists(p)) continue;
      for (const auto& entry : fs::directory_iterator(p)) {
        if (entry.path().extension() != ".json") continue;
        const std::string video = entry.path().stem().string();
        const json j = ovvrd::detail::read_json_file(entry.path().string());
        if (std::string(sub) == "regions") {
          auto& m = regions_[video];
          for (const auto& [k, v] : j.items()) m[k] = to_tensor(v, d_, k);
        } else {
          auto& m = captions_[video];
          for (const auto& [k, v] : j.items()) m[k] = v.get<std::string>();
        }
      }
    }
  }

  static std::string region_key(int fid, const BBox& box) {
    const auto q = box.quantized();
    return std::to_string(fid) + ":" + std::to_string(q[0]) + "," +
           std::to_string(q[1]) + "," + std::to_string(q[2]) + "," +
           std::to_string(q[3]);
  }

  nn::Tensor embed_text(const std::string& text) const override {
    if (text.empty()) throw ValidationError("embed_text: empty string");
    auto it = text_.find(text);
    if (it == text_.end()) {
      throw IoError("external provider: no text embedding for '" + text + "'");
    }
    return it->second;
  }

  nn::Tensor token_embedding(const std::string& word) const override {
    if (word.empty()) throw ValidationError("token_embedding: empty word");
    if (have_token_file_) {
      auto it = tokens_.find(word);
      if (it == tokens_.end()) {
        throw IoError("external provider: no token embedding for '" + word + "'");
      }
      return it->second;
    }
    return detail::unit_vec_from_hash(fnv1a(fnv1a(fnv1a(kFnvOffset, seed_), "token"), word),
                                      d_token_);
  }

  nn::Tensor embed_region(const std::string& video_key, int fid,
                          const BBox& box) const override {
    auto vit = regions_.find(video_key);
    if (vit != regions_.end()) {
      auto it = vit->second.find(region_key(fid, box));
      if (it != vit->second.end()) return it->second;
    }
    throw IoError("external provider: no region embedding for " + video_key + " " +
                  region_key(fid, box));
  }

  RegionCaption caption_region(const std::string& video_key, int fid,
                               const BBox& box) const override {
    auto vit = captions_.find(video_key);
    if (vit != captions_.end()) {
      auto it = vit->second.find(region_key(fid, box));
      if (it != vit->second.end()) return {fid, it->second};
    }
    throw IoError("external provider: no caption for " + video_key + " " +
                  region_key(fid, box));
  }

  std::uint64_t fingerprint() const override {
    std::uint64_t h = fnv1a(kFnvOffset, "external");
    h = fnv1a(h, seed_);
    h = fnv1a(h, static_cast<std::uint64_t>(d_));
    h = fnv1a(h, static_cast<std::uint64_t>(d_token_));
    for (const auto& [k, v] : text_) {
      h = fnv1a(h, k);
      h = v.fingerprint(h);
    }
    for (const auto& [vid, m] : regions_) {
      h = fnv1a(h, vid);
      for (const auto& [k, v] : m) {
        h = fnv1a(h, k);
        h = v.fingerprint(h);
      }
    }
    return h;
  }

 private:
  static nn::Tensor to_tensor(const json& j, std::size_t d, const std::string& key) {
    auto vec = j.get<std::vector<double>>();
    if (vec.size() != d) {
      throw ParseError("external provider: entry '" + key + "' has dim " +
                       std::to_string(vec.size()) + ", expected " + std::to_string(d));
    }
    return nn::Tensor({d}, std::move(vec));
  }

  static std::map<std::string, nn::Tensor> load_vector_map(const std::string& path,
                                                           std::size_t d) {
    std::map<std::string, nn::Tensor> out;
    const json j = ovvrd::detail::read_json_file(path);
    for (const auto& [k, v] : j.items()) out[k] = to_tensor(v, d, k);
    return out;
  }

  std::string dir_;
  std::uint64_t seed_ = 0;
  bool have_token_file_ = false;
  std::map<std::string, nn::Tensor> text_;
  std::map<std::string, nn::Tensor> tokens_;
  std::map<std::string, std::map<std::string, nn::Tensor>> regions_;
  std::map<std::string, std::map<std::string, std::string>> captions_;
};

}  // namespace ovvrd::enc
