#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "ovvrd/core/annotation.hpp"
#include "ovvrd/core/frames.hpp"
#include "ovvrd/core/hash.hpp"
#include "ovvrd/core/json_io.hpp"
#include "ovvrd/core/vocabulary.hpp"

using namespace ovvrd;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "ovvrd_data_model_tests";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tracklet make_tracklet(int tid, const std::string& cat, int begin, int n,
                       double x0, double y0, double step = 0.0) {
  std::vector<BBox> boxes;
  for (int i = 0; i < n; ++i) {
    const double x = x0 + step * i;
    boxes.push_back({x, y0, x + 30.0, y0 + 20.0});
  }
  return Tracklet(tid, cat, begin, std::move(boxes));
}

VideoAnnotation fixture_video() {
  VideoAnnotation v;
  v.video_id = "fixture";
  v.frame_count = 12;
  v.width = 320;
  v.height = 240;
  v.tracklets.push_back(make_tracklet(0, "dog", 0, 12, 10, 10, 2.0));
  v.tracklets.push_back(make_tracklet(1, "person", 0, 12, 100, 50, 1.0));
  v.tracklets.push_back(make_tracklet(2, "car", 4, 8, 200, 100));
  v.relations.push_back({0, 1, "chase", 0, 12, std::nullopt});
  v.relations.push_back({1, 2, "walk-toward", 4, 12, std::nullopt});
  v.canonicalize();
  return v;
}

}  // namespace

TEST_CASE("union_box examples and properties") {
  const BBox a{0, 0, 10, 10};
  const BBox b{20, 20, 30, 30};
  CHECK(union_box(a, b) == BBox{0, 0, 30, 30});
  CHECK(union_box(a, a) == a);
  CHECK(union_box(BBox{0, 0, 4, 4}, BBox{2, 2, 6, 3}) == BBox{0, 0, 6, 4});

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    auto rand_box = [&]() {
      const double x1 = rng.uniform(0, 50), y1 = rng.uniform(0, 50);
      return BBox{x1, y1, x1 + rng.uniform(1, 40), y1 + rng.uniform(1, 40)};
    };
    const BBox p = rand_box(), q = rand_box(), r = rand_box();
    CHECK(union_box(p, q) == union_box(q, p));
    CHECK(union_box(union_box(p, q), r) == union_box(p, union_box(q, r)));
    CHECK(union_box(p, p) == p);
    CHECK(union_box(p, q).contains(p));
    CHECK(union_box(p, q).contains(q));
  }
}

TEST_CASE("sample_frames formula") {
  const auto id30 = sample_frames(30, 30);
  for (int i = 0; i < 30; ++i) CHECK(id30[static_cast<std::size_t>(i)] == i);

  const auto evens = sample_frames(60, 30);
  for (int i = 0; i < 30; ++i) CHECK(evens[static_cast<std::size_t>(i)] == 2 * i);

  const auto tiny = sample_frames(7, 30);
  CHECK(tiny.size() == 30);
  for (std::size_t i = 0; i < tiny.size(); ++i) {
    CHECK(tiny[i] >= 0);
    CHECK(tiny[i] < 7);
    if (i > 0) CHECK(tiny[i] >= tiny[i - 1]);
  }

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int fc = 1 + static_cast<int>(rng.index(200));
    const int n = 1 + static_cast<int>(rng.index(64));
    const auto s = sample_frames(fc, n);
    CHECK(static_cast<int>(s.size()) == n);
    for (int idx : s) {
      CHECK(idx >= 0);
      CHECK(idx < fc);
    }
  }
  CHECK_THROWS_AS(sample_frames(0, 30), ValidationError);
}

TEST_CASE("bbox invariants are enforced") {
  CHECK_THROWS_AS((BBox{5, 0, 5, 10}.validate()), ValidationError);
  CHECK_THROWS_AS((BBox{-1, 0, 5, 10}.validate()), ValidationError);
  CHECK_NOTHROW((BBox{0, 0, 5, 10}.validate()));
}

TEST_CASE("annotation validation names the offending element") {
  VideoAnnotation v = fixture_video();
  v.relations.push_back({0, 99, "chase", 0, 4, std::nullopt});
  try {
    v.validate();
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("99") != std::string::npos);
  }

  VideoAnnotation w = fixture_video();
  w.relations.push_back({0, 2, "chase", 0, 12, std::nullopt});  // outside overlap
  CHECK_THROWS_AS(w.validate(), ValidationError);

  VideoAnnotation u = fixture_video();
  u.relations.push_back({0, 0, "chase", 0, 4, std::nullopt});
  CHECK_THROWS_AS(u.validate(), ValidationError);
}

TEST_CASE("minimal annotation file loads") {
  const auto path = temp_dir() / "minimal.json";
  std::ofstream out(path);
  out << R"({"video_id":"m1","frame_count":2,"width":100,"height":100,
    "subject/objects":[{"tid":5,"category":"dog"}],
    "trajectories":[[{"tid":5,"bbox":{"xmin":0,"ymin":0,"xmax":10,"ymax":10}}],
                    [{"tid":5,"bbox":{"xmin":1,"ymin":0,"xmax":11,"ymax":10}}]],
    "relation_instances":[], "some_unknown_field": 42})";
  out.close();
  const VideoAnnotation v = load_annotations(path.string());
  CHECK(v.video_id == "m1");
  REQUIRE(v.tracklets.size() == 1);
  CHECK(v.tracklets[0].tid() == 5);
  CHECK(v.tracklets[0].category() == "dog");
  CHECK(v.tracklets[0].begin_fid() == 0);
  CHECK(v.tracklets[0].end_fid() == 2);
  CHECK(v.relations.empty());
}

TEST_CASE("annotation with dangling tid fails to load") {
  const auto path = temp_dir() / "dangling.json";
  std::ofstream out(path);
  out << R"({"video_id":"m2","frame_count":1,"width":100,"height":100,
    "subject/objects":[{"tid":0,"category":"dog"}],
    "trajectories":[[{"tid":0,"bbox":{"xmin":0,"ymin":0,"xmax":10,"ymax":10}}]],
    "relation_instances":[{"subject_tid":0,"object_tid":99,"predicate":"chase",
                           "begin_fid":0,"end_fid":1}]})";
  out.close();
  CHECK_THROWS_AS(load_annotations(path.string()), ValidationError);
}

TEST_CASE("malformed JSON raises a parse error with context") {
  const auto path = temp_dir() / "broken.json";
  std::ofstream out(path);
  out << "{\"video_id\": \"x\",,}";
  out.close();
  CHECK_THROWS_AS(load_annotations(path.string()), ParseError);
}

TEST_CASE("save/load round-trip is bit-identical on the canonical form") {
  const VideoAnnotation v = fixture_video();
  const auto p1 = temp_dir() / "rt1.json";
  const auto p2 = temp_dir() / "rt2.json";
  save_annotations(v, p1.string());
  const VideoAnnotation loaded = load_annotations(p1.string());
  save_annotations(loaded, p2.string());
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("property: canonical round-trip identity on random annotations") {
  Rng rng(99);
  for (int trial = 0; trial < 25; ++trial) {
    VideoAnnotation v;
    v.video_id = "rand" + std::to_string(trial);
    v.frame_count = 4 + static_cast<int>(rng.index(20));
    v.width = 200;
    v.height = 150;
    const int n_tracks = 1 + static_cast<int>(rng.index(4));
    for (int tid = 0; tid < n_tracks; ++tid) {
      const int begin = static_cast<int>(rng.index(static_cast<std::size_t>(v.frame_count - 2)));
      const int len = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(v.frame_count - begin - 1)));
      std::vector<BBox> boxes;
      const double x0 = rng.uniform(0, 100), y0 = rng.uniform(0, 80);
      for (int i = 0; i < len; ++i) {
        boxes.push_back({x0 + i, y0, x0 + i + 25, y0 + 30});
      }
      v.tracklets.emplace_back(tid, "cat" + std::to_string(tid % 2), begin,
                               std::move(boxes));
    }
    for (int tid = 0; tid + 1 < n_tracks; ++tid) {
      const auto span = common_span(v.tracklets[static_cast<std::size_t>(tid)],
                                    v.tracklets[static_cast<std::size_t>(tid) + 1]);
      if (span.empty()) continue;
      v.relations.push_back({tid, tid + 1, "rel", span.begin, span.end, std::nullopt});
    }
    v.canonicalize();
    v.validate();

    const std::string canon = annotation_to_canonical_string(v);
    const auto p = temp_dir() / ("prop" + std::to_string(trial) + ".json");
    save_annotations(v, p.string());
    const VideoAnnotation back = load_annotations(p.string());
    CHECK(annotation_to_canonical_string(back) == canon);
  }
}

TEST_CASE("vocabulary disjointness is enforced") {
  const auto path = temp_dir() / "vocab_bad.json";
  std::ofstream out(path);
  out << R"({"objects":{"base":["dog"],"novel":["cat"]},
             "predicates":{"base":["ride","chase"],"novel":["ride"]}})";
  out.close();
  CHECK_THROWS_AS(load_vocabulary(path.string()), ValidationError);

  const auto good = temp_dir() / "vocab_good.json";
  VocabularySplit v;
  v.objects_base = {"dog", "person"};
  v.objects_novel = {"cat"};
  v.predicates_base = {"chase"};
  v.predicates_novel = {"ride"};
  save_vocabulary(v, good.string());
  const VocabularySplit w = load_vocabulary(good.string());
  CHECK(w.objects_base == std::vector<std::string>{"dog", "person"});
  CHECK(w.is_novel_predicate("ride"));
  CHECK_FALSE(w.is_base_predicate("ride"));
}

TEST_CASE("prediction round-trip") {
  const auto empty_path = temp_dir() / "pred_empty.json";
  save_predictions({}, empty_path.string());
  CHECK(load_predictions(empty_path.string()).empty());

  std::vector<PredictionSet> sets;
  for (int k = 0; k < 2; ++k) {
    PredictionSet s;
    s.video_id = "v" + std::to_string(k);
    for (int i = 0; i < 3; ++i) {
      PredictedRelation r;
      r.subject = "dog";
      r.predicate = "chase";
      r.object = "person";
      r.score = 0.9 - 0.1 * i;
      r.begin_fid = 0;
      r.end_fid = 2;
      r.sub_traj = {{0, 0, 10, 10}, {1, 0, 11, 10}};
      r.obj_traj = {{5, 5, 20, 20}, {6, 5, 21, 20}};
      s.relations.push_back(r);
    }
    sets.push_back(std::move(s));
  }
  const auto path = temp_dir() / "pred.json";
  save_predictions(sets, path.string());
  const auto loaded = load_predictions(path.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].video_id == "v0");
  CHECK(loaded[0].relations.size() == 3);
  CHECK(loaded[0].relations[1].score == Catch::Approx(0.8));
  CHECK(loaded[1].relations[2].sub_traj[1] == BBox{1, 0, 11, 10});

  // A second save must be byte-identical.
  const auto path2 = temp_dir() / "pred2.json";
  save_predictions(loaded, path2.string());
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("prediction scores must be non-increasing") {
  PredictionSet s;
  s.video_id = "v";
  PredictedRelation lo, hi;
  lo.subject = hi.subject = "a";
  lo.predicate = hi.predicate = "r";
  lo.object = hi.object = "b";
  lo.begin_fid = hi.begin_fid = 0;
  lo.end_fid = hi.end_fid = 1;
  lo.sub_traj = hi.sub_traj = {{0, 0, 1, 1}};
  lo.obj_traj = hi.obj_traj = {{0, 0, 1, 1}};
  lo.score = 0.1;
  hi.score = 0.9;
  s.relations = {lo, hi};
  CHECK_THROWS_AS(s.validate(), ValidationError);
}
