#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ovvrd/core/annotation.hpp"
#include "ovvrd/core/error.hpp"
#include "ovvrd/core/vocabulary.hpp"

namespace ovvrd {

using json = nlohmann::json;

namespace detail {

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    // e.what() carries the byte offset / line context from nlohmann.
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("short write to " + path);
}

template <class T>
T get_field(const json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(ctx + ": missing field '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception& e) {
    throw ParseError(ctx + ": field '" + key + "': " + e.what());
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Annotation files (subset of the ImageNet-VidVRD layout):
// {
//   "video_id": str, "frame_count": int, "width": int, "height": int,
//   "subject/objects": [{"tid": int, "category": str}, ...],
//   "trajectories": [[{"tid": int, "bbox": {"xmin","ymin","xmax","ymax"}}]...],
//   "relation_instances": [{"subject_tid","object_tid","predicate",
//                           "begin_fid","end_fid"}, ...]
// }
// Unknown fields are ignored. The canonical form sorts keys, tids, and
// relation tuples so golden-file tests are byte-stable.
// ---------------------------------------------------------------------------

inline json annotation_to_json(const VideoAnnotation& video) {
  json j;
  j["video_id"] = video.video_id;
  j["frame_count"] = video.frame_count;
  j["width"] = video.width;
  j["height"] = video.height;

  json subjects = json::array();
  std::vector<const Tracklet*> sorted;
  sorted.reserve(video.tracklets.size());
  for (const auto& t : video.tracklets) sorted.push_back(&t);
  std::sort(sorted.begin(), sorted.end(),
            [](const Tracklet* a, const Tracklet* b) { return a->tid() < b->tid(); });
  for (const Tracklet* t : sorted) {
    json s;
    s["tid"] = t->tid();
    s["category"] = t->category().value_or("");
    subjects.push_back(std::move(s));
  }
  j["subject/objects"] = std::move(subjects);

  json frames = json::array();
  for (int fid = 0; fid < video.frame_count; ++fid) {
    json frame = json::array();
    for (const Tracklet* t : sorted) {
      if (!t->covers(fid)) continue;
      const BBox& b = t->box(fid);
      json e;
      e["tid"] = t->tid();
      e["bbox"] = {{"xmin", b.x1}, {"ymin", b.y1}, {"xmax", b.x2}, {"ymax", b.y2}};
      frame.push_back(std::move(e));
    }
    frames.push_back(std::move(frame));
  }
  j["trajectories"] = std::move(frames);

  auto rels = video.relations;
  std::sort(rels.begin(), rels.end(),
            [](const RelationInstance& a, const RelationInstance& b) {
              return std::tie(a.begin_fid, a.subject_tid, a.object_tid, a.predicate,
                              a.end_fid) < std::tie(b.begin_fid, b.subject_tid,
                                                    b.object_tid, b.predicate,
                                                    b.end_fid);
            });
  json rj = json::array();
  for (const auto& r : rels) {
    json e;
    e["subject_tid"] = r.subject_tid;
    e["object_tid"] = r.object_tid;
    e["predicate"] = r.predicate;
    e["begin_fid"] = r.begin_fid;
    e["end_fid"] = r.end_fid;
    rj.push_back(std::move(e));
  }
  j["relation_instances"] = std::move(rj);
  return j;
}

inline VideoAnnotation annotation_from_json(const json& j, const std::string& ctx) {
  VideoAnnotation video;
  video.video_id = detail::get_field<std::string>(j, "video_id", ctx);
  video.frame_count = detail::get_field<int>(j, "frame_count", ctx);
  video.width = detail::get_field<int>(j, "width", ctx);
  video.height = detail::get_field<int>(j, "height", ctx);

  std::map<int, std::string> categories;
  if (j.contains("subject/objects")) {
    for (const auto& s : j.at("subject/objects")) {
      categories[detail::get_field<int>(s, "tid", ctx)] =
          s.value("category", std::string{});
    }
  }

  // Per-frame entries -> contiguous per-tracklet box runs.
  std::map<int, std::pair<int, std::vector<BBox>>> runs;  // tid -> (begin, boxes)
  if (j.contains("trajectories")) {
    const auto& frames = j.at("trajectories");
    int fid = 0;
    for (const auto& frame : frames) {
      for (const auto& e : frame) {
        const int tid = detail::get_field<int>(e, "tid", ctx);
        const auto& bj = e.at("bbox");
        BBox box{detail::get_field<double>(bj, "xmin", ctx),
                 detail::get_field<double>(bj, "ymin", ctx),
                 detail::get_field<double>(bj, "xmax", ctx),
                 detail::get_field<double>(bj, "ymax", ctx)};
        auto it = runs.find(tid);
        if (it == runs.end()) {
          runs[tid] = {fid, {box}};
        } else {
          const int expected = it->second.first + static_cast<int>(it->second.second.size());
          if (fid != expected) {
            throw ValidationError(ctx + ": tracklet " + std::to_string(tid) +
                                  " frames not contiguous (gap before frame " +
                                  std::to_string(fid) + ")");
          }
          it->second.second.push_back(box);
        }
      }
      ++fid;
    }
  }

  for (auto& [tid, run] : runs) {
    std::optional<std::string> cat;
    auto ct = categories.find(tid);
    if (ct != categories.end() && !ct->second.empty()) cat = ct->second;
    video.tracklets.emplace_back(tid, cat, run.first, std::move(run.second));
  }

  if (j.contains("relation_instances")) {
    for (const auto& e : j.at("relation_instances")) {
      RelationInstance r;
      r.subject_tid = detail::get_field<int>(e, "subject_tid", ctx);
      r.object_tid = detail::get_field<int>(e, "object_tid", ctx);
      r.predicate = detail::get_field<std::string>(e, "predicate", ctx);
      r.begin_fid = detail::get_field<int>(e, "begin_fid", ctx);
      r.end_fid = detail::get_field<int>(e, "end_fid", ctx);
      video.relations.push_back(std::move(r));
    }
  }

  video.canonicalize();
  video.validate();
  return video;
}

inline VideoAnnotation load_annotations(const std::string& path) {
  return annotation_from_json(detail::read_json_file(path), path);
}

inline std::string annotation_to_canonical_string(const VideoAnnotation& video) {
  return annotation_to_json(video).dump(2) + "\n";
}

inline void save_annotations(const VideoAnnotation& video, const std::string& path) {
  video.validate();
  detail::write_text_file(path, annotation_to_canonical_string(video));
}

// ---------------------------------------------------------------------------
// Vocabulary files:
// {"objects": {"base": [...], "novel": [...]},
//  "predicates": {"base": [...], "novel": [...]}}
// ---------------------------------------------------------------------------

inline VocabularySplit load_vocabulary(const std::string& path) {
  const json j = detail::read_json_file(path);
  VocabularySplit v;
  const json& obj = j.contains("objects") ? j.at("objects") : json::object();
  const json& pred = j.contains("predicates") ? j.at("predicates") : json::object();
  v.objects_base = obj.value("base", std::vector<std::string>{});
  v.objects_novel = obj.value("novel", std::vector<std::string>{});
  v.predicates_base = pred.value("base", std::vector<std::string>{});
  v.predicates_novel = pred.value("novel", std::vector<std::string>{});
  v.canonicalize();
  v.validate();
  return v;
}

inline void save_vocabulary(const VocabularySplit& vocab, const std::string& path) {
  VocabularySplit v = vocab;
  v.canonicalize();
  v.validate();
  json j;
  j["objects"] = {{"base", v.objects_base}, {"novel", v.objects_novel}};
  j["predicates"] = {{"base", v.predicates_base}, {"novel", v.predicates_novel}};
  detail::write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Prediction files: {"videos": {video_id: [{triplet, score, begin_fid,
// end_fid, sub_traj, obj_traj}, ...]}} with each list rank-ordered by
// non-increasing score.
// ---------------------------------------------------------------------------

inline json predictions_to_json(const std::vector<PredictionSet>& videos) {
  json vids = json::object();
  for (const auto& v : videos) {
    v.validate();
    json list = json::array();
    for (const auto& r : v.relations) {
      json e;
      e["triplet"] = {r.subject, r.predicate, r.object};
      e["score"] = r.score;
      e["begin_fid"] = r.begin_fid;
      e["end_fid"] = r.end_fid;
      json st = json::array();
      json ot = json::array();
      for (const auto& b : r.sub_traj) st.push_back({b.x1, b.y1, b.x2, b.y2});
      for (const auto& b : r.obj_traj) ot.push_back({b.x1, b.y1, b.x2, b.y2});
      e["sub_traj"] = std::move(st);
      e["obj_traj"] = std::move(ot);
      list.push_back(std::move(e));
    }
    vids[v.video_id] = std::move(list);
  }
  json j;
  j["videos"] = std::move(vids);
  return j;
}

inline void save_predictions(const std::vector<PredictionSet>& videos,
                             const std::string& path) {
  detail::write_text_file(path, predictions_to_json(videos).dump(2) + "\n");
}

inline std::vector<PredictionSet> load_predictions(const std::string& path) {
  const json j = detail::read_json_file(path);
  std::vector<PredictionSet> out;
  if (!j.contains("videos")) return out;
  for (const auto& [vid, list] : j.at("videos").items()) {
    PredictionSet set;
    set.video_id = vid;
    for (const auto& e : list) {
      PredictedRelation r;
      const auto trip = detail::get_field<std::vector<std::string>>(e, "triplet", path);
      if (trip.size() != 3) throw ParseError(path + ": triplet must have 3 entries");
      r.subject = trip[0];
      r.predicate = trip[1];
      r.object = trip[2];
      r.score = detail::get_field<double>(e, "score", path);
      r.begin_fid = detail::get_field<int>(e, "begin_fid", path);
      r.end_fid = detail::get_field<int>(e, "end_fid", path);
      for (const auto& b : e.at("sub_traj")) {
        r.sub_traj.push_back({b.at(0).get<double>(), b.at(1).get<double>(),
                              b.at(2).get<double>(), b.at(3).get<double>()});
      }
      for (const auto& b : e.at("obj_traj")) {
        r.obj_traj.push_back({b.at(0).get<double>(), b.at(1).get<double>(),
                              b.at(2).get<double>(), b.at(3).get<double>()});
      }
      set.relations.push_back(std::move(r));
    }
    set.validate();
    out.push_back(std::move(set));
  }
  std::sort(out.begin(), out.end(),
            [](const PredictionSet& a, const PredictionSet& b) {
              return a.video_id < b.video_id;
            });
  return out;
}

}  // namespace ovvrd
