#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "ovvrd/core/annotation.hpp"
#include "ovvrd/core/frames.hpp"
#include "ovvrd/core/vocabulary.hpp"
#include "ovvrd/encoders/external_dir.hpp"
#include "ovvrd/encoders/synthetic.hpp"
#include "ovvrd/eval/metrics.hpp"
#include "ovvrd/objectives.hpp"
#include "ovvrd/ov_tracklet.hpp"
#include "ovvrd/pipeline/config.hpp"
#include "ovvrd/prompt_align.hpp"
#include "ovvrd/st_refiner.hpp"
#include "ovvrd/vt_aggregation.hpp"

namespace ovvrd::pipe {

// One subject/object tracklet pair prepared for a forward pass.
struct PairSample {
  const VideoAnnotation* video = nullptr;
  const Tracklet* subject = nullptr;
  const Tracklet* object = nullptr;
  std::vector<int> frames;  // sampled fids inside the pair's common span

  // Training labels; empty/negative when the sample is inference-only.
  int y_s = -1;
  int y_o = -1;
  std::vector<double> y_rel;  // multi-hot over the base predicates
  std::vector<double> y_int;  // per sampled frame
};

enum class CategoryScope { kBase, kAll };

struct PairForward {
  nn::Var sims_s;        // per-object-category cosine row
  nn::Var sims_o;
  nn::Var rel_cosines;   // per-relation-category cosine row
  nn::Var int_probs;     // [T] interaction probabilities
  nn::Var x_pooled;      // pooled pair feature feeding the prompt gate
};

// The assembled network: aggregation, refiner, prompt alignment, and the
// similarity heads, over a frozen embedding provider.
class RelationModel {
 public:
  RelationModel(Config cfg, enc::ProviderPtr provider, VocabularySplit vocab)
      : cfg_(std::move(cfg)),
        provider_(std::move(provider)),
        vocab_(std::move(vocab)),
        manner_(parse_manner(cfg_.aggregation_manner)),
        variant_(parse_prompt_variant(cfg_.prompt_variant)),
        adapter_which_(parse_adapter_placement(cfg_.adapter_which)),
        forward_rng_(cfg_.seed ^ 0x5eedf00dULL) {
    cfg_.validate();
    vocab_.canonicalize();
    vocab_.validate();

    Rng rng(cfg_.seed);
    motion_ = MotionEncoder(cfg_.d, rng);
    vt_ = VisualTextAggregator(cfg_.d, cfg_.n_heads, cfg_.dropout, rng);
    st_ = SpatioTemporalRefiner(cfg_.d, cfg_.n_heads, cfg_.n_layers, cfg_.t_max,
                                cfg_.dropout, rng);
    aligner_ = PromptAligner(provider_, vocab_.all_predicates(), cfg_.m_tokens,
                             cfg_.cls_fraction, cfg_.adapter_bottleneck, rng);
    interaction_head_ = nn::Linear(kNumRoles * cfg_.d, 1, rng);

    object_texts_ = object_text_features(*provider_, vocab_.all_objects());

    // Plain category text embeddings for tracklet classification; the scoring
    // head above uses the hand-template features instead.
    const auto all_objects = vocab_.all_objects();
    classify_texts_ = nn::Tensor({all_objects.size(), cfg_.d});
    for (std::size_t i = 0; i < all_objects.size(); ++i) {
      const nn::Tensor e = provider_->embed_text(all_objects[i]);
      for (std::size_t j = 0; j < cfg_.d; ++j) classify_texts_.at2(i, j) = e[j];
    }

    params_ = nn::ParamMap{};
    motion_.collect("motion", params_);
    vt_.collect("vt", params_);
    st_.collect("st", params_);
    aligner_.collect("prompt", params_);
    interaction_head_.collect("int_head", params_);
  }

  const Config& config() const { return cfg_; }
  const VocabularySplit& vocab() const { return vocab_; }
  const enc::EmbeddingProvider& provider() const { return *provider_; }
  nn::ParamMap& params() { return params_; }
  const nn::ParamMap& params() const { return params_; }
  PromptAligner& aligner() { return aligner_; }
  VisualTextAggregator& aggregator() { return vt_; }
  SpatioTemporalRefiner& refiner() { return st_; }

  void set_train(bool train) { train_ = train; }
  bool is_train() const { return train_; }
  Rng& forward_rng() { return forward_rng_; }

  std::vector<std::string> relation_categories(CategoryScope scope) const {
    return scope == CategoryScope::kBase ? vocab_.predicates_base
                                         : vocab_.all_predicates();
  }

  std::vector<std::string> object_categories(CategoryScope scope) const {
    return scope == CategoryScope::kBase ? vocab_.objects_base : vocab_.all_objects();
  }

  // Hash over everything that must never move during training: the provider,
  // the class/hand prompt embeddings, and the object text features.
  std::uint64_t frozen_fingerprint() const {
    return classify_texts_.fingerprint(
        object_texts_.fingerprint(aligner_.frozen_fingerprint()));
  }

  PairForward forward_pair(const PairSample& sample, CategoryScope scope) const {
    if (sample.video == nullptr || sample.subject == nullptr ||
        sample.object == nullptr || sample.frames.empty()) {
      throw ValidationError("forward_pair: incomplete sample");
    }
    const std::size_t t_count = sample.frames.size();
    const std::size_t d = cfg_.d;
    const std::string& key = sample.video->video_id;
    const BBox frame_box{0.0, 0.0, static_cast<double>(sample.video->width),
                         static_cast<double>(sample.video->height)};

    // Role regions per frame: subject, object, union, background.
    nn::Tensor f_v({t_count, kNumRoles, d});
    std::vector<std::array<std::string, kNumRoles>> captions(t_count);
    for (std::size_t i = 0; i < t_count; ++i) {
      const int fid = sample.frames[i];
      const std::array<BBox, kNumRoles> boxes{
          sample.subject->box(fid), sample.object->box(fid),
          union_box(sample.subject->box(fid), sample.object->box(fid)), frame_box};
      for (std::size_t k = 0; k < kNumRoles; ++k) {
        const nn::Tensor e = provider_->embed_region(key, fid, boxes[k]);
        for (std::size_t j = 0; j < d; ++j) f_v.at3(i, k, j) = e[j];
        captions[i][k] = provider_->caption_region(key, fid, boxes[k]).text;
      }
    }

    const nn::Var s_raw = nn::Var::constant(build_role_text(captions, *provider_));
    const nn::Var s_proc = vt_.text_self_attention(s_raw, forward_rng_, train_);
    const nn::Var f_vt =
        vt_.aggregate(nn::Var::constant(f_v), s_proc, manner_, forward_rng_, train_);

    const MotionFeature motion =
        motion_features(*sample.subject, *sample.object, sample.frames, motion_);
    const nn::Var refined = st_.spatial_refine(f_vt, motion.projected, forward_rng_,
                                               train_);
    const RefinedFeatures rf = st_.temporal_refine(refined, forward_rng_, train_);

    PairForward out;
    out.x_pooled = nn::mean_axis0(rf.role_sum);

    // Object / subject scoring against the hand-crafted category texts.
    const auto obj_cats = object_categories(scope);
    const nn::Var obj_texts_adapted = nn::l2_normalize_lastdim(
        aligner_.adapt(object_text_rows(scope), adapter_which_, /*is_visual=*/false,
                       train_),
        1e-12);
    const auto score_role = [&](std::size_t role) {
      const nn::Var v = nn::l2_normalize_lastdim(
          aligner_.adapt(rf.pooled[role], adapter_which_, /*is_visual=*/true, train_),
          1e-12);
      return score_objects(v, obj_texts_adapted);
    };
    out.sims_s = score_role(kSubject);
    out.sims_o = score_role(kObject);

    // Relation scoring: per-role adapted visual summaries against the
    // prompt-encoded per-role relation texts.
    std::array<nn::Var, kNumRoles> v_roles;
    for (std::size_t k = 0; k < kNumRoles; ++k) {
      v_roles[k] = aligner_.adapt(rf.pooled[k], adapter_which_, true, train_);
    }
    const auto rel_cats = relation_categories(scope);
    std::vector<nn::Var> cosines;
    cosines.reserve(rel_cats.size());
    for (const auto& cat : rel_cats) {
      std::array<nn::Var, kNumRoles> t_roles;
      for (std::size_t k = 0; k < kNumRoles; ++k) {
        const nn::Var enc = aligner_.mix_and_encode(k, cat, out.x_pooled, variant_);
        t_roles[k] = aligner_.adapt(enc, adapter_which_, false, train_);
      }
      cosines.push_back(nn::reshape(relation_cosine(v_roles, t_roles), {1}));
    }
    out.rel_cosines = nn::concat_axis0(cosines);

    // Interaction head over the concatenated per-frame role tokens.
    std::vector<nn::Var> frame_logits;
    frame_logits.reserve(t_count);
    for (std::size_t i = 0; i < t_count; ++i) {
      const nn::Var tokens = nn::index_axis0(rf.per_role, i);  // [4,d]
      frame_logits.push_back(interaction_head_.vec(nn::reshape(tokens, {kNumRoles * d})));
    }
    out.int_probs = nn::sigmoid(nn::concat_axis0(frame_logits));
    return out;
  }

  // Training-path relation scores: sigmoid of the temperature-scaled cosine.
  nn::Var relation_scores(const nn::Var& cosines) const {
    return nn::sigmoid(nn::mul_scalar(cosines, 1.0 / cfg_.relation_tau));
  }

  // Inference-path score per the scoring contract: sigmoid(cos).
  nn::Var relation_scores_eval(const nn::Var& cosines) const {
    return nn::sigmoid(cosines);
  }

  struct BatchLoss {
    TotalLoss loss;
    std::size_t n_pairs = 0;
  };

  BatchLoss batch_loss(const std::vector<const PairSample*>& batch) const {
    if (batch.empty()) throw ValidationError("batch_loss: empty batch");
    nn::Var obj_acc, rel_acc, int_acc;
    for (const PairSample* sample : batch) {
      const PairForward fwd = forward_pair(*sample, CategoryScope::kBase);
      if (sample->y_s < 0 || sample->y_o < 0 ||
          sample->y_rel.size() != vocab_.predicates_base.size() ||
          sample->y_int.size() != sample->frames.size()) {
        throw ValidationError("batch_loss: sample is missing training labels");
      }
      const nn::Var l_obj =
          loss_obj_sub(fwd.sims_s, static_cast<std::size_t>(sample->y_s), fwd.sims_o,
                       static_cast<std::size_t>(sample->y_o), cfg_.tracklet_tau);
      const nn::Var l_rel = loss_rel(relation_scores(fwd.rel_cosines), sample->y_rel);
      const nn::Var l_int = loss_int(fwd.int_probs, sample->y_int);
      obj_acc = obj_acc.defined() ? nn::add(obj_acc, l_obj) : l_obj;
      rel_acc = rel_acc.defined() ? nn::add(rel_acc, l_rel) : l_rel;
      int_acc = int_acc.defined() ? nn::add(int_acc, l_int) : l_int;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    BatchLoss out;
    out.n_pairs = batch.size();
    out.loss = total_loss(nn::mul_scalar(obj_acc, inv), nn::mul_scalar(rel_acc, inv),
                          nn::mul_scalar(int_acc, inv), cfg_.gamma, cfg_.delta);
    return out;
  }

  // Pooled tracklet classification per the open-vocabulary tracklet module.
  CategoryDistribution classify(const std::string& video_key, const Tracklet& tracklet,
                                CategoryScope scope) const {
    const auto cats = object_categories(scope);
    const nn::Tensor v = tracklet_visual_feature(*provider_, video_key, tracklet,
                                                 static_cast<int>(cfg_.t));
    return classify_tracklet(v, cats, base_prefix(classify_texts_, scope),
                             cfg_.tracklet_tau);
  }

 private:
  nn::Var object_text_rows(CategoryScope scope) const {
    return nn::Var::constant(base_prefix(object_texts_, scope));
  }

  // Base categories occupy the leading rows of the all-category matrices.
  nn::Tensor base_prefix(const nn::Tensor& rows, CategoryScope scope) const {
    if (scope == CategoryScope::kAll) return rows;
    const std::size_t n_base = vocab_.objects_base.size();
    nn::Tensor out({n_base, cfg_.d});
    for (std::size_t i = 0; i < n_base; ++i) {
      for (std::size_t j = 0; j < cfg_.d; ++j) out.at2(i, j) = rows.at2(i, j);
    }
    return out;
  }

  Config cfg_;
  enc::ProviderPtr provider_;
  VocabularySplit vocab_;
  AggregationManner manner_;
  PromptVariant variant_;
  AdapterPlacement adapter_which_;

  MotionEncoder motion_;
  VisualTextAggregator vt_;
  SpatioTemporalRefiner st_;
  PromptAligner aligner_;
  nn::Linear interaction_head_;
  nn::Tensor object_texts_;    // frozen hand-template features [C_all, d]
  nn::Tensor classify_texts_;  // frozen plain text embeddings [C_all, d]

  nn::ParamMap params_;
  bool train_ = false;
  mutable Rng forward_rng_;
};

inline enc::ProviderPtr make_provider(const Config& cfg,
                                      const std::vector<VideoAnnotation>& plant) {
  if (cfg.encoder_kind == "external") {
    return std::make_shared<enc::ExternalDirProvider>(cfg.encoder_dir);
  }
  auto provider = std::make_shared<enc::SyntheticProvider>(cfg.seed, cfg.d, cfg.d_token);
  for (const auto& v : plant) provider->plant(v);
  return provider;
}

}  // namespace ovvrd::pipe
