#pragma once

// Shared random fixture generators for the evaluation tests and the
// acceptance suite.

#include <string>
#include <vector>

#include "ovvrd/core/annotation.hpp"
#include "ovvrd/core/hash.hpp"
#include "ovvrd/core/vocabulary.hpp"

namespace ovvrd::testing {

inline VocabularySplit eval_vocab() {
  VocabularySplit v;
  v.objects_base = {"car", "dog", "person"};
  v.objects_novel = {"bird"};
  v.predicates_base = {"chase", "follow", "left-of"};
  v.predicates_novel = {"ride", "watch"};
  return v;
}

// A random small video: up to 4 GT relations between linearly moving
// tracklets, with predicates drawn from the full vocabulary.
inline VideoAnnotation random_eval_video(Rng& rng, const VocabularySplit& vocab,
                                         const std::string& id, std::size_t max_gt = 4) {
  VideoAnnotation v;
  v.video_id = id;
  v.frame_count = 8 + static_cast<int>(rng.index(8));
  v.width = 320;
  v.height = 240;

  const auto objects = vocab.all_objects();
  const int n_tracks = 2 + static_cast<int>(rng.index(3));
  for (int tid = 0; tid < n_tracks; ++tid) {
    const int begin = static_cast<int>(rng.index(3));
    const int len = v.frame_count - begin - static_cast<int>(rng.index(3));
    std::vector<BBox> boxes;
    double x = rng.uniform(0, 200), y = rng.uniform(0, 150);
    const double vx = rng.uniform(-2, 2), vy = rng.uniform(-1.5, 1.5);
    const double w = rng.uniform(25, 60), h = rng.uniform(25, 60);
    for (int i = 0; i < len; ++i) {
      const double bx = std::clamp(x + vx * i, 0.0, 320.0 - w);
      const double by = std::clamp(y + vy * i, 0.0, 240.0 - h);
      boxes.push_back({bx, by, bx + w, by + h});
    }
    v.tracklets.emplace_back(tid, objects[rng.index(objects.size())], begin,
                             std::move(boxes));
  }

  const auto predicates = vocab.all_predicates();
  const std::size_t n_rel = 1 + rng.index(max_gt);
  for (std::size_t i = 0; i < n_rel; ++i) {
    const int s = static_cast<int>(rng.index(static_cast<std::size_t>(n_tracks)));
    int o = static_cast<int>(rng.index(static_cast<std::size_t>(n_tracks)));
    if (o == s) o = (o + 1) % n_tracks;
    const auto span = common_span(v.tracklets[static_cast<std::size_t>(s)],
                                  v.tracklets[static_cast<std::size_t>(o)]);
    if (span.length() < 2) continue;
    const int b = span.begin + static_cast<int>(rng.index(
                                   static_cast<std::size_t>(span.length() - 1)));
    const int e = b + 1 +
                  static_cast<int>(rng.index(static_cast<std::size_t>(span.end - b)));
    v.relations.push_back({s, o, predicates[rng.index(predicates.size())], b, e,
                           std::nullopt});
  }
  v.canonicalize();
  v.validate();
  return v;
}

// Predictions for one video: a blend of jittered copies of the ground truth
// (some matching, some label-corrupted, some spatially off) and pure noise.
inline PredictionSet random_predictions(Rng& rng, const VideoAnnotation& video,
                                        const VocabularySplit& vocab,
                                        std::size_t max_preds = 8) {
  PredictionSet out;
  out.video_id = video.video_id;
  const auto predicates = vocab.all_predicates();
  const auto objects = vocab.all_objects();

  const std::size_t n = 1 + rng.index(max_preds);
  for (std::size_t i = 0; i < n; ++i) {
    PredictedRelation r;
    if (!video.relations.empty() && rng.uniform() < 0.7) {
      const auto& gt = video.relations[rng.index(video.relations.size())];
      const Tracklet* s = video.find_tracklet(gt.subject_tid);
      const Tracklet* o = video.find_tracklet(gt.object_tid);
      r.subject = *s->category();
      r.predicate = rng.uniform() < 0.8
                        ? gt.predicate
                        : predicates[rng.index(predicates.size())];
      r.object = *o->category();
      r.begin_fid = gt.begin_fid;
      r.end_fid = gt.end_fid;
      const double jitter = rng.uniform() < 0.6 ? rng.uniform(0, 6) : rng.uniform(40, 90);
      for (int f = gt.begin_fid; f < gt.end_fid; ++f) {
        BBox bs = s->box(f);
        BBox bo = o->box(f);
        bs.x1 += jitter;
        bs.x2 += jitter;
        bo.x1 += jitter;
        bo.x2 += jitter;
        r.sub_traj.push_back(bs);
        r.obj_traj.push_back(bo);
      }
    } else {
      r.subject = objects[rng.index(objects.size())];
      r.predicate = predicates[rng.index(predicates.size())];
      r.object = objects[rng.index(objects.size())];
      r.begin_fid = 0;
      r.end_fid = 2;
      for (int f = 0; f < 2; ++f) {
        const double x = rng.uniform(0, 250), y = rng.uniform(0, 180);
        r.sub_traj.push_back({x, y, x + 40, y + 40});
        r.obj_traj.push_back({x + 10, y + 5, x + 55, y + 50});
      }
    }
    r.score = rng.uniform();
    out.relations.push_back(std::move(r));
  }
  std::stable_sort(out.relations.begin(), out.relations.end(),
                   [](const PredictedRelation& a, const PredictedRelation& b) {
                     return a.score > b.score;
                   });
  return out;
}

}  // namespace ovvrd::testing
