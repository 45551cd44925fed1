#pragma once

#include <algorithm>
#include <ostream>
#include <string>
#include <vector>

#include "ovvrd/pipeline/train.hpp"

namespace ovvrd::pipe {

// Runs the full scoring stack for one video and emits the ranked prediction
// list. For every ordered tracklet pair the predicates of the whole (base
// plus novel) vocabulary are scored; the triplet score composes the subject
// and object class probabilities with the predicate score. PredCls and SGCls
// keep the annotated trajectories; PredCls additionally keeps the annotated
// class labels.
inline PredictionSet infer(RelationModel& model, const VideoAnnotation& video,
                           eval::Task task, std::ostream* warn = nullptr) {
  model.set_train(false);
  PredictionSet out;
  out.video_id = video.video_id;

  if (video.tracklets.size() < 2) {
    if (warn != nullptr) {
      *warn << "warning: " << video.video_id
            << " has fewer than two tracklets; emitting no predictions\n";
    }
    return out;
  }

  const auto& cfg = model.config();
  const auto rel_cats = model.relation_categories(CategoryScope::kAll);

  struct ClassChoice {
    std::string label;
    double prob = 1.0;
  };
  std::vector<ClassChoice> classes(video.tracklets.size());
  for (std::size_t i = 0; i < video.tracklets.size(); ++i) {
    const auto& t = video.tracklets[i];
    if (task == eval::Task::kPredCls) {
      if (!t.category()) {
        if (warn != nullptr) {
          *warn << "warning: " << video.video_id << " tracklet " << t.tid()
                << " lacks a category required by predcls; skipping it\n";
        }
        classes[i] = {"", 0.0};
      } else {
        classes[i] = {*t.category(), 1.0};
      }
    } else {
      const auto dist = model.classify(video.video_id, t, CategoryScope::kAll);
      classes[i] = {dist.top_label(), dist.top_prob()};
    }
  }

  const auto pairs = build_pairs(video, model.vocab(), cfg.t, /*for_training=*/false);
  for (const auto& pair : pairs) {
    const std::size_t si = static_cast<std::size_t>(
        std::find_if(video.tracklets.begin(), video.tracklets.end(),
                     [&](const Tracklet& t) { return t.tid() == pair.subject->tid(); }) -
        video.tracklets.begin());
    const std::size_t oi = static_cast<std::size_t>(
        std::find_if(video.tracklets.begin(), video.tracklets.end(),
                     [&](const Tracklet& t) { return t.tid() == pair.object->tid(); }) -
        video.tracklets.begin());
    if (classes[si].label.empty() || classes[oi].label.empty()) continue;

    const PairForward fwd = model.forward_pair(pair, CategoryScope::kAll);
    const nn::Tensor scores = model.relation_scores_eval(fwd.rel_cosines).value();

    const FrameSpan span = common_span(*pair.subject, *pair.object);
    std::vector<BBox> sub_traj, obj_traj;
    for (int fid = span.begin; fid < span.end; ++fid) {
      sub_traj.push_back(pair.subject->box(fid));
      obj_traj.push_back(pair.object->box(fid));
    }

    for (std::size_t r = 0; r < rel_cats.size(); ++r) {
      PredictedRelation pred;
      pred.subject = classes[si].label;
      pred.predicate = rel_cats[r];
      pred.object = classes[oi].label;
      pred.score = classes[si].prob * classes[oi].prob * scores[r];
      pred.begin_fid = span.begin;
      pred.end_fid = span.end;
      pred.sub_traj = sub_traj;
      pred.obj_traj = obj_traj;
      out.relations.push_back(std::move(pred));
    }
  }

  std::stable_sort(out.relations.begin(), out.relations.end(),
                   [](const PredictedRelation& a, const PredictedRelation& b) {
                     return a.score > b.score;
                   });
  if (out.relations.size() > cfg.top_n) out.relations.resize(cfg.top_n);
  out.validate();
  return out;
}

}  // namespace ovvrd::pipe
