#pragma once

#include <algorithm>
#include <map>
#include <string>
#include <vector>

#include "ovvrd/core/annotation.hpp"
#include "ovvrd/core/vocabulary.hpp"

namespace ovvrd::eval {

enum class Task { kSGDet, kSGCls, kPredCls };
enum class SplitKind { kAll, kNovel };

inline Task parse_task(const std::string& s) {
  if (s == "sgdet") return Task::kSGDet;
  if (s == "sgcls") return Task::kSGCls;
  if (s == "predcls") return Task::kPredCls;
  throw ConfigError("unknown task '" + s + "'");
}

inline SplitKind parse_split(const std::string& s) {
  if (s == "all") return SplitKind::kAll;
  if (s == "novel") return SplitKind::kNovel;
  throw ConfigError("unknown split '" + s + "'");
}

inline const char* task_name(Task t) {
  switch (t) {
    case Task::kSGDet: return "sgdet";
    case Task::kSGCls: return "sgcls";
    default: return "predcls";
  }
}

inline const char* split_name(SplitKind s) {
  return s == SplitKind::kAll ? "all" : "novel";
}

// A box sequence over the half-open frame span [begin_fid, begin_fid + n).
struct TrajectorySegment {
  int begin_fid = 0;
  std::vector<BBox> boxes;

  int end_fid() const { return begin_fid + static_cast<int>(boxes.size()); }

  const BBox* box_at(int fid) const {
    if (fid < begin_fid || fid >= end_fid()) return nullptr;
    return &boxes[static_cast<std::size_t>(fid - begin_fid)];
  }
};

// Volume IoU: per-frame intersection and union areas summed over the union of
// the two temporal extents; a frame missing from one trajectory contributes
// area 0 to the intersection and the other box's area to the union.
inline double viou(const TrajectorySegment& a, const TrajectorySegment& b) {
  const int begin = std::min(a.begin_fid, b.begin_fid);
  const int end = std::max(a.end_fid(), b.end_fid());
  double inter = 0.0, uni = 0.0;
  for (int fid = begin; fid < end; ++fid) {
    const BBox* ba = a.box_at(fid);
    const BBox* bb = b.box_at(fid);
    if (ba && bb) {
      inter += intersection_area(*ba, *bb);
      uni += union_area(*ba, *bb);
    } else if (ba) {
      uni += ba->area();
    } else if (bb) {
      uni += bb->area();
    }
  }
  return uni > 0.0 ? inter / uni : 0.0;
}

// One flattened ground-truth triplet instance.
struct GtInstance {
  std::string subject;
  std::string predicate;
  std::string object;
  TrajectorySegment sub_traj;
  TrajectorySegment obj_traj;

  std::string triplet_key() const { return subject + "\t" + predicate + "\t" + object; }
};

inline std::vector<GtInstance> gt_instances(const VideoAnnotation& video) {
  std::vector<GtInstance> out;
  for (const auto& r : video.relations) {
    const Tracklet* s = video.find_tracklet(r.subject_tid);
    const Tracklet* o = video.find_tracklet(r.object_tid);
    if (s == nullptr || o == nullptr || !s->category() || !o->category()) {
      throw ValidationError(video.video_id + ": ground truth needs categorized tracklets");
    }
    GtInstance g;
    g.subject = *s->category();
    g.predicate = r.predicate;
    g.object = *o->category();
    g.sub_traj.begin_fid = r.begin_fid;
    g.obj_traj.begin_fid = r.begin_fid;
    for (int fid = r.begin_fid; fid < r.end_fid; ++fid) {
      g.sub_traj.boxes.push_back(s->box(fid));
      g.obj_traj.boxes.push_back(o->box(fid));
    }
    out.push_back(std::move(g));
  }
  return out;
}

// Greedy score-ordered matching. A prediction matches an unmatched ground
// truth iff the triplet labels are equal and min(vIoU_sub, vIoU_obj) > thresh;
// among candidates the highest overlap wins (ties by lowest GT index), and
// each ground truth is matched at most once. Predictions must already be
// rank-sorted; equal scores keep their input order. The task only determines
// which trajectories the predictions carry (ground-truth ones for PredCls and
// SGCls, detected ones for SGDet); the matching rule itself is shared.
inline std::vector<int> match(const PredictionSet& preds,
                              const std::vector<GtInstance>& gts,
                              double thresh = 0.5) {
  std::vector<int> matched_gt(preds.relations.size(), -1);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t p = 0; p < preds.relations.size(); ++p) {
    const auto& pr = preds.relations[p];
    const std::string key = pr.triplet_key();
    TrajectorySegment ps{pr.begin_fid, pr.sub_traj};
    TrajectorySegment po{pr.begin_fid, pr.obj_traj};
    double best = thresh;
    int best_gt = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].triplet_key() != key) continue;
      const double ov = std::min(viou(ps, gts[g].sub_traj), viou(po, gts[g].obj_traj));
      if (ov > best) {
        best = ov;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      taken[static_cast<std::size_t>(best_gt)] = true;
      matched_gt[p] = best_gt;
    }
  }
  return matched_gt;
}

// AP over rank-ordered match flags: sum_k precision@k * is_match_k / n_gt.
inline double average_precision(const std::vector<bool>& flags, std::size_t n_gt) {
  if (n_gt == 0) return 0.0;
  double hits = 0.0, ap = 0.0;
  for (std::size_t k = 0; k < flags.size(); ++k) {
    if (!flags[k]) continue;
    hits += 1.0;
    ap += hits / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(n_gt);
}

// Matched ground truths within the first K predictions, over n_gt. Because
// matching is greedy in rank order, the prefix matching equals re-matching
// with only the top-K predictions.
inline double recall_at_k(const std::vector<bool>& flags, std::size_t n_gt,
                          std::size_t k) {
  if (n_gt == 0) throw ValidationError("recall_at_k: n_gt must be >= 1");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < flags.size() && i < k; ++i) {
    if (flags[i]) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(n_gt);
}

struct EvalReport {
  Task task = Task::kSGDet;
  SplitKind split = SplitKind::kAll;
  double map = 0.0;
  double r50 = 0.0;
  double r100 = 0.0;
  std::map<std::string, double> per_category_ap;  // triplet key -> AP
  std::size_t n_videos = 0;
  std::size_t n_gt = 0;
  std::size_t skipped_videos = 0;  // predictions for unknown video ids
  bool empty_split = false;        // no ground truth after split filtering
};

// The full protocol. The Novel split keeps all object categories but filters
// both ground truth and predictions to novel predicates; recall denominators
// therefore exclude base-predicate ground truth.
inline EvalReport evaluate(const std::vector<PredictionSet>& predictions,
                           const std::vector<VideoAnnotation>& annotations,
                           const VocabularySplit& vocab, Task task, SplitKind split,
                           double thresh = 0.5) {
  vocab.validate();
  EvalReport report;
  report.task = task;
  report.split = split;

  std::map<std::string, const VideoAnnotation*> by_id;
  for (const auto& v : annotations) by_id[v.video_id] = &v;

  const auto keep_predicate = [&](const std::string& p) {
    return split == SplitKind::kAll || vocab.is_novel_predicate(p);
  };

  struct Scored {
    double score;
    bool flag;
  };
  std::map<std::string, std::vector<Scored>> per_category;  // rank streams
  std::map<std::string, std::size_t> category_gt;
  double recall50_sum = 0.0, recall100_sum = 0.0;
  std::size_t recall_videos = 0;

  std::vector<std::string> video_order;
  for (const auto& v : annotations) video_order.push_back(v.video_id);
  std::sort(video_order.begin(), video_order.end());

  std::map<std::string, const PredictionSet*> preds_by_id;
  for (const auto& p : predictions) {
    if (by_id.count(p.video_id) == 0) {
      ++report.skipped_videos;
      continue;
    }
    preds_by_id[p.video_id] = &p;
  }

  for (const auto& vid : video_order) {
    const VideoAnnotation& video = *by_id.at(vid);
    std::vector<GtInstance> gts;
    for (auto& g : gt_instances(video)) {
      if (keep_predicate(g.predicate)) gts.push_back(std::move(g));
    }
    for (const auto& g : gts) ++category_gt[g.triplet_key()];
    report.n_gt += gts.size();
    ++report.n_videos;

    PredictionSet filtered;
    filtered.video_id = vid;
    if (auto it = preds_by_id.find(vid); it != preds_by_id.end()) {
      for (const auto& r : it->second->relations) {
        if (keep_predicate(r.predicate)) filtered.relations.push_back(r);
      }
    }

    const std::vector<int> matches = match(filtered, gts, thresh);
    std::vector<bool> flags(matches.size());
    for (std::size_t i = 0; i < matches.size(); ++i) flags[i] = matches[i] >= 0;

    for (std::size_t i = 0; i < filtered.relations.size(); ++i) {
      per_category[filtered.relations[i].triplet_key()].push_back(
          {filtered.relations[i].score, flags[i]});
    }
    if (!gts.empty()) {
      recall50_sum += recall_at_k(flags, gts.size(), 50);
      recall100_sum += recall_at_k(flags, gts.size(), 100);
      ++recall_videos;
    }
  }

  if (report.n_gt == 0) {
    report.empty_split = true;
    return report;
  }

  double ap_sum = 0.0;
  std::size_t ap_categories = 0;
  for (const auto& [key, n_gt] : category_gt) {
    if (n_gt == 0) continue;
    auto stream = per_category.count(key) ? per_category.at(key) : std::vector<Scored>{};
    std::stable_sort(stream.begin(), stream.end(),
                     [](const Scored& a, const Scored& b) { return a.score > b.score; });
    std::vector<bool> flags(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) flags[i] = stream[i].flag;
    const double ap = average_precision(flags, n_gt);
    report.per_category_ap[key] = ap;
    ap_sum += ap;
    ++ap_categories;
  }
  report.map = ap_categories > 0 ? ap_sum / static_cast<double>(ap_categories) : 0.0;
  report.r50 = recall_videos > 0 ? recall50_sum / static_cast<double>(recall_videos) : 0.0;
  report.r100 = recall_videos > 0 ? recall100_sum / static_cast<double>(recall_videos) : 0.0;
  return report;
}

}  // namespace ovvrd::eval
