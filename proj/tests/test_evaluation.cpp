#include <catch2/catch_amalgamated.hpp>

#include "fixtures.hpp"
#include "oracle_eval.hpp"
#include "ovvrd/eval/metrics.hpp"

using namespace ovvrd;
using namespace ovvrd::eval;

namespace {

TrajectorySegment seg(int begin, std::vector<BBox> boxes) {
  return {begin, std::move(boxes)};
}

PredictionSet gt_as_predictions(const VideoAnnotation& v) {
  PredictionSet out;
  out.video_id = v.video_id;
  double score = 1.0;
  for (const auto& r : v.relations) {
    const Tracklet* s = v.find_tracklet(r.subject_tid);
    const Tracklet* o = v.find_tracklet(r.object_tid);
    PredictedRelation p;
    p.subject = *s->category();
    p.predicate = r.predicate;
    p.object = *o->category();
    p.begin_fid = r.begin_fid;
    p.end_fid = r.end_fid;
    for (int f = r.begin_fid; f < r.end_fid; ++f) {
      p.sub_traj.push_back(s->box(f));
      p.obj_traj.push_back(o->box(f));
    }
    p.score = score;
    score -= 1e-3;
    out.relations.push_back(std::move(p));
  }
  return out;
}

}  // namespace

TEST_CASE("viou hand cases") {
  const std::vector<BBox> a3(3, BBox{0, 0, 10, 10});
  CHECK(viou(seg(0, a3), seg(0, a3)) == Catch::Approx(1.0).margin(1e-9));

  // Temporally disjoint spans.
  CHECK(viou(seg(0, a3), seg(3, a3)) == Catch::Approx(0.0).margin(1e-12));

  // Same 3-frame span, boxes [0,0,10,10] vs [5,0,15,10]: per frame the
  // intersection is 50 and the union 150.
  const std::vector<BBox> b3(3, BBox{5, 0, 15, 10});
  CHECK(viou(seg(0, a3), seg(0, b3)) == Catch::Approx(1.0 / 3.0).margin(1e-9));

  // Symmetry and range on random segments.
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    auto rand_seg = [&]() {
      const int begin = static_cast<int>(rng.index(4));
      const int len = 1 + static_cast<int>(rng.index(5));
      std::vector<BBox> boxes;
      for (int f = 0; f < len; ++f) {
        const double x = rng.uniform(0, 80), y = rng.uniform(0, 80);
        boxes.push_back({x, y, x + rng.uniform(5, 40), y + rng.uniform(5, 40)});
      }
      return seg(begin, std::move(boxes));
    };
    const auto p = rand_seg(), q = rand_seg();
    const double pq = viou(p, q);
    CHECK(pq == viou(q, p));
    CHECK(pq >= 0.0);
    CHECK(pq <= 1.0);
  }
}

TEST_CASE("greedy matching basics") {
  Rng rng(5);
  const auto vocab = testing::eval_vocab();
  const auto video = testing::random_eval_video(rng, vocab, "v0");
  const auto gts = gt_instances(video);
  const auto preds = gt_as_predictions(video);

  // Exact copies of the ground truth all match.
  const auto matches = match(preds, gts);
  for (int m : matches) CHECK(m >= 0);

  // Two predictions on one ground truth: only the higher-ranked matches.
  VideoAnnotation single;
  single.video_id = "s";
  single.frame_count = 4;
  single.width = 100;
  single.height = 100;
  single.tracklets.emplace_back(0, "dog", 0, std::vector<BBox>(4, BBox{0, 0, 20, 20}));
  single.tracklets.emplace_back(1, "person", 0,
                                std::vector<BBox>(4, BBox{30, 30, 60, 60}));
  single.relations.push_back({0, 1, "chase", 0, 4, std::nullopt});
  single.validate();
  auto p1 = gt_as_predictions(single);
  auto dup = p1.relations[0];
  dup.score = p1.relations[0].score - 0.1;
  p1.relations.push_back(dup);
  const auto m2 = match(p1, gt_instances(single));
  CHECK(m2[0] == 0);
  CHECK(m2[1] == -1);
}

TEST_CASE("match agrees with the brute-force oracle on random fixtures") {
  Rng rng(7);
  const auto vocab = testing::eval_vocab();
  for (int trial = 0; trial < 100; ++trial) {
    const auto video = testing::random_eval_video(rng, vocab,
                                                  "v" + std::to_string(trial));
    const auto preds = testing::random_predictions(rng, video, vocab);
    const auto got = match(preds, gt_instances(video));
    const auto expect = oracle::greedy_match_oracle(preds, oracle::gts_of(video));
    REQUIRE(got.size() == expect.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == expect[i]);
  }
}

TEST_CASE("average precision hand values") {
  CHECK(average_precision({true, true, true}, 3) == Catch::Approx(1.0));
  CHECK(average_precision({true, false, true}, 2) ==
        Catch::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));  // 5/6
  CHECK(average_precision({false, false}, 2) == 0.0);
  CHECK(average_precision({}, 0) == 0.0);
}

TEST_CASE("recall_at_k hand values and monotonicity") {
  // 60 ranked predictions, single GT matched only at rank 55.
  std::vector<bool> flags(60, false);
  flags[54] = true;
  CHECK(recall_at_k(flags, 1, 50) == 0.0);
  CHECK(recall_at_k(flags, 1, 100) == 1.0);
  CHECK_THROWS_AS(recall_at_k(flags, 0, 50), ValidationError);

  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    std::vector<bool> f(rng.index(120));
    std::size_t n_match = 0;
    for (std::size_t j = 0; j < f.size(); ++j) {
      f[j] = rng.uniform() < 0.2;
      n_match += f[j];
    }
    const std::size_t n_gt = std::max<std::size_t>(n_match, 1 + rng.index(5));
    CHECK(recall_at_k(f, n_gt, 50) <= recall_at_k(f, n_gt, 100) + 1e-12);
  }
}

TEST_CASE("verbatim ground truth scores perfectly on both splits") {
  Rng rng(13);
  const auto vocab = testing::eval_vocab();
  std::vector<VideoAnnotation> annos;
  std::vector<PredictionSet> preds;
  bool has_novel = false;
  for (int i = 0; i < 4; ++i) {
    annos.push_back(testing::random_eval_video(rng, vocab, "v" + std::to_string(i)));
    preds.push_back(gt_as_predictions(annos.back()));
    for (const auto& r : annos.back().relations) {
      has_novel = has_novel || vocab.is_novel_predicate(r.predicate);
    }
  }
  for (auto task : {Task::kSGDet, Task::kSGCls, Task::kPredCls}) {
    const auto all = evaluate(preds, annos, vocab, task, SplitKind::kAll);
    CHECK(all.map == Catch::Approx(1.0).margin(1e-12));
    CHECK(all.r50 == Catch::Approx(1.0).margin(1e-12));
    CHECK(all.r100 == Catch::Approx(1.0).margin(1e-12));
    if (has_novel) {
      const auto novel = evaluate(preds, annos, vocab, task, SplitKind::kNovel);
      CHECK_FALSE(novel.empty_split);
      CHECK(novel.map == Catch::Approx(1.0).margin(1e-12));
      CHECK(novel.r50 == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("novel split with zero novel ground truth is flagged, not silently zero") {
  VocabularySplit vocab = testing::eval_vocab();
  VideoAnnotation v;
  v.video_id = "basey";
  v.frame_count = 4;
  v.width = 100;
  v.height = 100;
  v.tracklets.emplace_back(0, "dog", 0, std::vector<BBox>(4, BBox{0, 0, 20, 20}));
  v.tracklets.emplace_back(1, "person", 0, std::vector<BBox>(4, BBox{30, 30, 60, 60}));
  v.relations.push_back({0, 1, "chase", 0, 4, std::nullopt});  // base predicate only
  v.validate();
  const auto report =
      evaluate({gt_as_predictions(v)}, {v}, vocab, Task::kPredCls, SplitKind::kNovel);
  CHECK(report.empty_split);
}

TEST_CASE("unknown video ids are skipped and counted") {
  Rng rng(17);
  const auto vocab = testing::eval_vocab();
  const auto video = testing::random_eval_video(rng, vocab, "known");
  auto preds = gt_as_predictions(video);
  PredictionSet ghost;
  ghost.video_id = "ghost";
  const auto report = evaluate({preds, ghost}, {video}, vocab, Task::kPredCls,
                               SplitKind::kAll);
  CHECK(report.skipped_videos == 1);
  CHECK(report.map == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("evaluate equals the independent oracle exactly on random fixtures") {
  Rng rng(19);
  const auto vocab = testing::eval_vocab();
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<VideoAnnotation> annos;
    std::vector<PredictionSet> preds;
    const int n_videos = 2 + static_cast<int>(rng.index(4));
    for (int i = 0; i < n_videos; ++i) {
      annos.push_back(testing::random_eval_video(
          rng, vocab, "t" + std::to_string(trial) + "_v" + std::to_string(i)));
      preds.push_back(testing::random_predictions(rng, annos.back(), vocab));
    }
    for (auto task : {Task::kSGDet, Task::kSGCls, Task::kPredCls}) {
      const auto all = evaluate(preds, annos, vocab, task, SplitKind::kAll);
      const auto oracle_all = oracle::evaluate_oracle(preds, annos, vocab, false);
      CHECK(all.map == oracle_all.map);
      CHECK(all.r50 == oracle_all.r50);
      CHECK(all.r100 == oracle_all.r100);

      const auto novel = evaluate(preds, annos, vocab, task, SplitKind::kNovel);
      if (!novel.empty_split) {
        const auto oracle_novel = oracle::evaluate_oracle(preds, annos, vocab, true);
        CHECK(novel.map == oracle_novel.map);
        CHECK(novel.r50 == oracle_novel.r50);
        CHECK(novel.r100 == oracle_novel.r100);
      }
    }
  }
}

TEST_CASE("evaluate is invariant to video permutation") {
  Rng rng(23);
  const auto vocab = testing::eval_vocab();
  std::vector<VideoAnnotation> annos;
  std::vector<PredictionSet> preds;
  for (int i = 0; i < 5; ++i) {
    annos.push_back(testing::random_eval_video(rng, vocab, "p" + std::to_string(i)));
    preds.push_back(testing::random_predictions(rng, annos.back(), vocab));
  }
  const auto base = evaluate(preds, annos, vocab, Task::kSGDet, SplitKind::kAll);

  std::reverse(annos.begin(), annos.end());
  std::rotate(preds.begin(), preds.begin() + 2, preds.end());
  const auto shuffled = evaluate(preds, annos, vocab, Task::kSGDet, SplitKind::kAll);
  CHECK(base.map == shuffled.map);
  CHECK(base.r50 == shuffled.r50);
  CHECK(base.r100 == shuffled.r100);
}
