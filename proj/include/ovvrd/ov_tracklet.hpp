#pragma once

#include <string>
#include <vector>

#include "ovvrd/core/frames.hpp"
#include "ovvrd/core/tracklet.hpp"
#include "ovvrd/encoders/provider.hpp"
#include "ovvrd/nn/modules.hpp"

namespace ovvrd {

// Softmax distribution over object categories.
struct CategoryDistribution {
  std::vector<std::string> labels;
  std::vector<double> probs;

  std::size_t argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i) {
      if (probs[i] > probs[best]) best = i;
    }
    return best;
  }

  const std::string& top_label() const { return labels[argmax()]; }
  double top_prob() const { return probs[argmax()]; }
};

// Temperature softmax over cosine similarities between a tracklet's visual
// feature and the category text embeddings. Inputs are unit-norm so cosine
// equals dot product.
inline CategoryDistribution classify_tracklet(const nn::Tensor& visual,
                                              const std::vector<std::string>& labels,
                                              const nn::Tensor& text_embs,
                                              double tau) {
  if (tau <= 0.0) throw ValidationError("classify_tracklet: tau must be positive");
  if (text_embs.ndim() != 2 || text_embs.dim(0) != labels.size() ||
      text_embs.dim(1) != visual.numel()) {
    throw ValidationError("classify_tracklet: shape mismatch");
  }
  const std::size_t c = labels.size(), d = visual.numel();
  std::vector<double> logits(c);
  double mx = -1e300;
  for (std::size_t i = 0; i < c; ++i) {
    double cosine = 0.0;
    for (std::size_t j = 0; j < d; ++j) cosine += visual[j] * text_embs.at2(i, j);
    logits[i] = cosine / tau;
    mx = std::max(mx, logits[i]);
  }
  CategoryDistribution out;
  out.labels = labels;
  out.probs.resize(c);
  double z = 0.0;
  for (std::size_t i = 0; i < c; ++i) {
    out.probs[i] = std::exp(logits[i] - mx);
    z += out.probs[i];
  }
  for (auto& p : out.probs) p /= z;
  return out;
}

// Pooled tracklet visual feature: mean of the per-frame region embeddings over
// uniformly sampled frames, renormalized.
inline nn::Tensor tracklet_visual_feature(const enc::EmbeddingProvider& provider,
                                          const std::string& video_key,
                                          const Tracklet& tracklet, int n_frames = 30) {
  const auto offsets = sample_frames(static_cast<int>(tracklet.length()), n_frames);
  nn::Tensor acc({provider.dim()});
  for (int off : offsets) {
    const int fid = tracklet.begin_fid() + off;
    const nn::Tensor v = provider.embed_region(video_key, fid, tracklet.box(fid));
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] += v[i];
  }
  const double norm = acc.l2_norm();
  if (norm > 1e-12) {
    for (std::size_t i = 0; i < acc.numel(); ++i) acc[i] /= norm;
  }
  return acc;
}

inline constexpr std::size_t kMotionDim = 8;

// Raw pairwise motion descriptor, one row per sampled frame:
//   [ dcx/wu, dcy/hu, log(ws/wo), log(hs/ho), dvx, dvy, iou, phase ]
// Relative offsets and velocities are normalized by the union box size, which
// makes every component invariant to a common translation of both boxes.
inline nn::Tensor motion_descriptor(const Tracklet& sub, const Tracklet& obj,
                                    const std::vector<int>& frames) {
  if (frames.empty()) throw ValidationError("motion_descriptor: no frames");
  for (int fid : frames) {
    if (!sub.covers(fid) || !obj.covers(fid)) {
      throw ValidationError("motion_descriptor: frame " + std::to_string(fid) +
                            " outside the pair's common span");
    }
  }
  const std::size_t t_count = frames.size();
  nn::Tensor out({t_count, kMotionDim});
  auto center_vel = [&](const Tracklet& t, std::size_t i, double& vx, double& vy) {
    // First differences of box centers; the first sample uses the forward
    // difference. Repeated sampled frames yield zero velocity.
    std::size_t a = i, b = i;
    if (i == 0) {
      b = std::min<std::size_t>(1, t_count - 1);
    } else {
      a = i - 1;
    }
    const int fa = frames[a], fb = frames[b];
    if (fa == fb) {
      vx = vy = 0.0;
      return;
    }
    const BBox& ba = t.box(fa);
    const BBox& bb = t.box(fb);
    vx = (bb.cx() - ba.cx()) / static_cast<double>(fb - fa);
    vy = (bb.cy() - ba.cy()) / static_cast<double>(fb - fa);
  };
  for (std::size_t i = 0; i < t_count; ++i) {
    const BBox& bs = sub.box(frames[i]);
    const BBox& bo = obj.box(frames[i]);
    const BBox bu = union_box(bs, bo);
    double vxs, vys, vxo, vyo;
    center_vel(sub, i, vxs, vys);
    center_vel(obj, i, vxo, vyo);
    out.at2(i, 0) = (bs.cx() - bo.cx()) / bu.width();
    out.at2(i, 1) = (bs.cy() - bo.cy()) / bu.height();
    out.at2(i, 2) = std::log(bs.width() / bo.width());
    out.at2(i, 3) = std::log(bs.height() / bo.height());
    out.at2(i, 4) = (vxs - vxo) / bu.width();
    out.at2(i, 5) = (vys - vyo) / bu.height();
    out.at2(i, 6) = iou(bs, bo);
    out.at2(i, 7) = static_cast<double>(i) / static_cast<double>(t_count);
  }
  return out;
}

// Learnable projection of the raw descriptor into model space.
class MotionEncoder {
 public:
  MotionEncoder() = default;
  MotionEncoder(std::size_t d, Rng& rng) : proj_(kMotionDim, d, rng) {}

  nn::Var operator()(const nn::Tensor& raw) const {
    return nn::tanh(proj_(nn::Var::constant(raw)));  // [T, d]
  }

  void collect(const std::string& prefix, nn::ParamMap& params) const {
    proj_.collect(prefix + ".proj", params);
  }

 private:
  nn::Linear proj_;
};

struct MotionFeature {
  nn::Tensor raw;      // [T, 8]
  nn::Var projected;   // [T, d]
};

inline MotionFeature motion_features(const Tracklet& sub, const Tracklet& obj,
                                     const std::vector<int>& frames,
                                     const MotionEncoder& encoder) {
  MotionFeature out;
  out.raw = motion_descriptor(sub, obj, frames);
  out.projected = encoder(out.raw);
  return out;
}

}  // namespace ovvrd
