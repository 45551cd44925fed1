#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ovvrd/core/bbox.hpp"
#include "ovvrd/core/error.hpp"
#include "ovvrd/core/tracklet.hpp"

namespace ovvrd {

// A <subject, predicate, object> triplet bound to two tracklets over a
// half-open frame span.
struct RelationInstance {
  int subject_tid = 0;
  int object_tid = 0;
  std::string predicate;
  int begin_fid = 0;
  int end_fid = 0;
  std::optional<double> score;

  friend bool operator==(const RelationInstance& a, const RelationInstance& b) {
    return a.subject_tid == b.subject_tid && a.object_tid == b.object_tid &&
           a.predicate == b.predicate && a.begin_fid == b.begin_fid &&
           a.end_fid == b.end_fid && a.score == b.score;
  }
};

class VideoAnnotation {
 public:
  std::string video_id;
  int frame_count = 0;
  int width = 0;
  int height = 0;
  std::vector<Tracklet> tracklets;
  std::vector<RelationInstance> relations;

  const Tracklet* find_tracklet(int tid) const {
    for (const auto& t : tracklets) {
      if (t.tid() == tid) return &t;
    }
    return nullptr;
  }

  // Enforces every data-model invariant; error messages name the offending
  // tid / relation so bad files are debuggable.
  void validate() const {
    if (frame_count < 1 || width < 1 || height < 1) {
      throw ValidationError(video_id + ": non-positive dimensions");
    }
    std::set<int> tids;
    for (const auto& t : tracklets) {
      t.validate();
      if (!tids.insert(t.tid()).second) {
        throw ValidationError(video_id + ": duplicate tid " +
                              std::to_string(t.tid()));
      }
      if (t.begin_fid() < 0 || t.end_fid() > frame_count) {
        throw ValidationError(video_id + ": tracklet " + std::to_string(t.tid()) +
                              " span outside [0," + std::to_string(frame_count) +
                              ")");
      }
      for (const auto& b : t.boxes()) {
        if (b.x2 > width || b.y2 > height) {
          throw ValidationError(video_id + ": tracklet " +
                                std::to_string(t.tid()) +
                                " box outside video bounds");
        }
      }
    }
    for (const auto& r : relations) {
      const Tracklet* s = find_tracklet(r.subject_tid);
      const Tracklet* o = find_tracklet(r.object_tid);
      if (s == nullptr) {
        throw ValidationError(video_id + ": relation references missing tid " +
                              std::to_string(r.subject_tid));
      }
      if (o == nullptr) {
        throw ValidationError(video_id + ": relation references missing tid " +
                              std::to_string(r.object_tid));
      }
      if (r.subject_tid == r.object_tid) {
        throw ValidationError(video_id + ": relation with subject == object (tid " +
                              std::to_string(r.subject_tid) + ")");
      }
      if (r.begin_fid >= r.end_fid) {
        throw ValidationError(video_id + ": relation '" + r.predicate +
                              "' has empty span");
      }
      const FrameSpan overlap = common_span(*s, *o);
      if (r.begin_fid < overlap.begin || r.end_fid > overlap.end) {
        throw ValidationError(video_id + ": relation '" + r.predicate + "' (" +
                              std::to_string(r.subject_tid) + "," +
                              std::to_string(r.object_tid) +
                              ") span outside tracklet overlap");
      }
      if (r.score && (*r.score < 0.0 || *r.score > 1.0)) {
        throw ValidationError(video_id + ": relation score outside [0,1]");
      }
    }
  }

  // Canonical ordering: tracklets by tid, relations by their full tuple.
  void canonicalize() {
    std::sort(tracklets.begin(), tracklets.end(),
              [](const Tracklet& a, const Tracklet& b) { return a.tid() < b.tid(); });
    std::sort(relations.begin(), relations.end(),
              [](const RelationInstance& a, const RelationInstance& b) {
                return std::tie(a.begin_fid, a.subject_tid, a.object_tid,
                                a.predicate, a.end_fid) <
                       std::tie(b.begin_fid, b.subject_tid, b.object_tid,
                                b.predicate, b.end_fid);
              });
  }
};

// One ranked prediction: a triplet with its trajectories over a frame span.
struct PredictedRelation {
  std::string subject;
  std::string predicate;
  std::string object;
  double score = 0.0;
  int begin_fid = 0;
  int end_fid = 0;
  std::vector<BBox> sub_traj;  // one box per frame of [begin_fid, end_fid)
  std::vector<BBox> obj_traj;

  std::string triplet_key() const { return subject + "\t" + predicate + "\t" + object; }
};

struct PredictionSet {
  std::string video_id;
  std::vector<PredictedRelation> relations;  // scores non-increasing in rank

  void validate() const {
    for (std::size_t i = 0; i < relations.size(); ++i) {
      const auto& r = relations[i];
      if (i > 0 && relations[i - 1].score < r.score) {
        throw ValidationError(video_id + ": prediction scores increase at rank " +
                              std::to_string(i));
      }
      if (r.begin_fid >= r.end_fid) {
        throw ValidationError(video_id + ": prediction with empty span");
      }
      const auto span = static_cast<std::size_t>(r.end_fid - r.begin_fid);
      if (r.sub_traj.size() != span || r.obj_traj.size() != span) {
        throw ValidationError(video_id + ": trajectory length != span at rank " +
                              std::to_string(i));
      }
      if (r.subject.empty() || r.predicate.empty() || r.object.empty()) {
        throw ValidationError(video_id + ": empty triplet label");
      }
    }
  }
};

}  // namespace ovvrd
