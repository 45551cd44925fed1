#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ovvrd/core/json_io.hpp"
#include "ovvrd/pipeline/config.hpp"

namespace ovvrd::pipe {

struct SyntheticDataset {
  VocabularySplit vocab;
  std::vector<VideoAnnotation> train_videos;  // base categories only
  std::vector<VideoAnnotation> test_videos;   // novel categories allowed
};

inline VocabularySplit default_synthetic_vocab() {
  VocabularySplit v;
  v.objects_base = {"car", "dog", "person", "skateboard"};
  v.objects_novel = {"bicycle", "bird"};
  v.predicates_base = {"chase", "follow", "left-of"};
  v.predicates_novel = {"ride", "watch"};
  v.canonicalize();
  return v;
}

namespace detail {

// The planted rule: the predicate of a pair is a function of the category
// pair, so the relation is recoverable from the categorical signals the
// synthetic encoder embeds into the region features.
inline std::string planted_predicate(const std::string& subject_cat,
                                     const std::string& object_cat,
                                     const std::vector<std::string>& predicates) {
  const std::uint64_t h =
      fnv1a(fnv1a(fnv1a(kFnvOffset, subject_cat), "->"), object_cat);
  return predicates[h % predicates.size()];
}

inline VideoAnnotation synth_video(Rng& rng, const std::string& id, int frame_count,
                                   const std::vector<std::string>& objects,
                                   const std::vector<std::string>& predicates) {
  VideoAnnotation v;
  v.video_id = id;
  v.frame_count = frame_count;
  v.width = 320;
  v.height = 240;

  // Tracklets live in separate horizontal bands so planted regions never
  // nest; motion is linear with clipping.
  const int n_tracks = 2 + static_cast<int>(rng.index(2));
  for (int tid = 0; tid < n_tracks; ++tid) {
    const double band_y = 10.0 + 78.0 * tid;
    const double h = 40.0 + rng.index(15);
    const double w = 45.0 + rng.index(20);
    double x = rng.uniform(0.0, 120.0);
    const double vx = rng.uniform(-3.0, 3.0);
    std::vector<BBox> boxes;
    for (int f = 0; f < frame_count; ++f) {
      const double bx = std::clamp(x + vx * f, 0.0, 320.0 - w);
      boxes.push_back({std::round(bx), band_y, std::round(bx) + w, band_y + h});
    }
    v.tracklets.emplace_back(tid, objects[rng.index(objects.size())], 0,
                             std::move(boxes));
  }

  // Relations on consecutive ordered pairs over the full common span; the
  // remaining ordered pairs stay relation-free and provide interaction
  // negatives.
  for (int s = 0; s + 1 < n_tracks; ++s) {
    const auto& sc = *v.tracklets[static_cast<std::size_t>(s)].category();
    const auto& oc = *v.tracklets[static_cast<std::size_t>(s) + 1].category();
    v.relations.push_back(
        {s, s + 1, planted_predicate(sc, oc, predicates), 0, frame_count, std::nullopt});
  }
  v.canonicalize();
  v.validate();
  return v;
}

}  // namespace detail

// Deterministic synthetic dataset: same seed, same bytes. Training videos use
// only base categories; test videos draw from the full vocabulary.
inline SyntheticDataset gen_synthetic(std::uint64_t seed, std::size_t n_train,
                                      std::size_t n_test, const VocabularySplit& vocab,
                                      int frame_count = 16) {
  vocab.validate();
  SyntheticDataset out;
  out.vocab = vocab;
  out.vocab.canonicalize();
  for (std::size_t i = 0; i < n_train; ++i) {
    Rng rng(fnv1a(fnv1a(kFnvOffset, seed), "train" + std::to_string(i)));
    out.train_videos.push_back(detail::synth_video(
        rng, "train_" + std::to_string(i), frame_count, out.vocab.objects_base,
        out.vocab.predicates_base));
  }
  const auto all_objects = out.vocab.all_objects();
  const auto all_predicates = out.vocab.all_predicates();
  for (std::size_t i = 0; i < n_test; ++i) {
    Rng rng(fnv1a(fnv1a(kFnvOffset, seed), "test" + std::to_string(i)));
    out.test_videos.push_back(detail::synth_video(rng, "test_" + std::to_string(i),
                                                  frame_count, all_objects,
                                                  all_predicates));
  }
  return out;
}

inline void write_dataset(const SyntheticDataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "train");
  fs::create_directories(fs::path(dir) / "test");
  save_vocabulary(ds.vocab, (fs::path(dir) / "vocabulary.json").string());
  for (const auto& v : ds.train_videos) {
    save_annotations(v, (fs::path(dir) / "train" / (v.video_id + ".json")).string());
  }
  for (const auto& v : ds.test_videos) {
    save_annotations(v, (fs::path(dir) / "test" / (v.video_id + ".json")).string());
  }
}

inline std::vector<VideoAnnotation> load_annotation_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir)) throw IoError("annotation directory not found: " + dir);
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path().string());
  }
  std::sort(files.begin(), files.end());
  std::vector<VideoAnnotation> out;
  for (const auto& f : files) out.push_back(load_annotations(f));
  return out;
}

}  // namespace ovvrd::pipe
