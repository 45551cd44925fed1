#pragma once

#include <algorithm>
#include <functional>
#include <iomanip>
#include <ostream>
#include <vector>

#include "ovvrd/nn/optim.hpp"
#include "ovvrd/pipeline/model.hpp"

namespace ovvrd::pipe {

// Raised when training data leaks categories reserved for the novel split.
struct SplitLeakError : ValidationError {
  explicit SplitLeakError(const std::string& what) : ValidationError(what) {}
};

// Builds the training pair samples for one video: every ordered tracklet pair
// with a non-empty common span, with sampled frames and labels attached.
inline std::vector<PairSample> build_pairs(const VideoAnnotation& video,
                                           const VocabularySplit& vocab,
                                           std::size_t t_sampled, bool for_training) {
  std::vector<PairSample> out;
  if (for_training) {
    for (const auto& t : video.tracklets) {
      if (!t.category()) {
        throw ValidationError(video.video_id + ": training tracklet " +
                              std::to_string(t.tid()) + " has no category");
      }
      if (!vocab.is_base_object(*t.category())) {
        throw SplitLeakError(video.video_id + ": tracklet " + std::to_string(t.tid()) +
                             " uses non-base object category '" + *t.category() + "'");
      }
    }
    for (const auto& r : video.relations) {
      if (!vocab.is_base_predicate(r.predicate)) {
        throw SplitLeakError(video.video_id + ": relation uses non-base predicate '" +
                             r.predicate + "'");
      }
    }
  }

  const auto base_index = [&](const std::string& cat) {
    const auto it =
        std::find(vocab.objects_base.begin(), vocab.objects_base.end(), cat);
    return it == vocab.objects_base.end()
               ? -1
               : static_cast<int>(it - vocab.objects_base.begin());
  };

  for (const auto& sub : video.tracklets) {
    for (const auto& obj : video.tracklets) {
      if (sub.tid() == obj.tid()) continue;
      const FrameSpan span = common_span(sub, obj);
      if (span.empty()) continue;
      PairSample sample;
      sample.video = &video;
      sample.subject = &sub;
      sample.object = &obj;
      for (int off : sample_frames(span.length(), static_cast<int>(t_sampled))) {
        sample.frames.push_back(span.begin + off);
      }
      if (for_training) {
        sample.y_s = base_index(*sub.category());
        sample.y_o = base_index(*obj.category());
        sample.y_rel.assign(vocab.predicates_base.size(), 0.0);
        sample.y_int.assign(sample.frames.size(), 0.0);
        for (const auto& r : video.relations) {
          if (r.subject_tid != sub.tid() || r.object_tid != obj.tid()) continue;
          const auto it = std::find(vocab.predicates_base.begin(),
                                    vocab.predicates_base.end(), r.predicate);
          sample.y_rel[static_cast<std::size_t>(it - vocab.predicates_base.begin())] =
              1.0;
          for (std::size_t i = 0; i < sample.frames.size(); ++i) {
            if (sample.frames[i] >= r.begin_fid && sample.frames[i] < r.end_fid) {
              sample.y_int[i] = 1.0;
            }
          }
        }
      }
      out.push_back(std::move(sample));
    }
  }
  return out;
}

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  std::vector<StepRecord> steps;
  std::size_t epochs_run = 0;
};

// Single-threaded training loop with the multi-step decay schedule. The
// per-step log line is machine parsable key=value.
class Trainer {
 public:
  Trainer(RelationModel& model, const std::vector<VideoAnnotation>& videos)
      : model_(model),
        opt_(nn::AdamW::Options{.weight_decay = model.config().weight_decay}) {
    const auto& cfg = model_.config();
    for (const auto& v : videos) {
      auto pairs = build_pairs(v, model_.vocab(), cfg.t, /*for_training=*/true);
      for (auto& p : pairs) samples_.push_back(std::move(p));
    }
    if (samples_.empty()) {
      throw ValidationError("trainer: no usable tracklet pairs in the dataset");
    }
  }

  nn::AdamW& optimizer() { return opt_; }
  std::size_t pair_count() const { return samples_.size(); }

  TrainResult run(std::ostream* log = nullptr,
                  const std::function<void(const StepRecord&)>& on_step = {}) {
    const auto& cfg = model_.config();
    Rng shuffle_rng(cfg.seed ^ 0x7121137a1957ULL);
    TrainResult result;
    std::size_t step = 0;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      const double lr =
          nn::schedule_lr(cfg.lr, cfg.decay_epochs, cfg.decay_factor,
                          static_cast<int>(epoch));
      std::vector<std::size_t> order(samples_.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      shuffle_rng.shuffle(order);

      for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        std::vector<const PairSample*> batch;
        for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size);
             ++i) {
          batch.push_back(&samples_[order[i]]);
        }
        model_.set_train(true);
        opt_.zero_grad(model_.params());
        const auto bl = model_.batch_loss(batch);
        nn::backward(bl.loss.total);
        opt_.step(model_.params(), lr);
        model_.set_train(false);
        ++step;

        StepRecord rec{step, epoch, lr, bl.loss.breakdown};
        if (log != nullptr) {
          *log << "step=" << step << " l_obj_sub=" << format(rec.loss.l_obj_sub)
               << " l_rel=" << format(rec.loss.l_rel)
               << " l_int=" << format(rec.loss.l_int)
               << " total=" << format(rec.loss.total) << " lr=" << format(lr) << "\n";
        }
        if (on_step) on_step(rec);
        result.steps.push_back(std::move(rec));
        if (cfg.max_steps != 0 && step >= cfg.max_steps) {
          result.epochs_run = epoch;
          return result;
        }
      }
      result.epochs_run = epoch;
    }
    return result;
  }

 private:
  static std::string format(double v) {
    std::ostringstream os;
    os << std::setprecision(10) << v;
    return os.str();
  }

  RelationModel& model_;
  nn::AdamW opt_;
  std::vector<PairSample> samples_;
};

}  // namespace ovvrd::pipe
