#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ovvrd/pipeline/checkpoint.hpp"
#include "ovvrd/pipeline/infer.hpp"
#include "ovvrd/pipeline/synthetic_data.hpp"

using namespace ovvrd;
using namespace ovvrd::pipe;
namespace fs = std::filesystem;

namespace {

Config tiny_config() {
  Config cfg;
  cfg.seed = 5;
  cfg.d = 16;
  cfg.d_token = 16;
  cfg.n_heads = 4;
  cfg.n_layers = 1;
  cfg.t = 4;
  cfg.t_max = 8;
  cfg.adapter_bottleneck = 4;
  cfg.batch_size = 4;
  cfg.epochs = 2;
  cfg.max_steps = 6;
  cfg.top_n = 50;
  return cfg;
}

struct World {
  SyntheticDataset ds;
  enc::ProviderPtr provider;
  RelationModel model;

  explicit World(const Config& cfg, std::size_t n_train = 2)
      : ds(gen_synthetic(cfg.seed, n_train, 1, default_synthetic_vocab())),
        provider(make_plant_provider(cfg, ds)),
        model(cfg, provider, ds.vocab) {}

  static enc::ProviderPtr make_plant_provider(const Config& cfg,
                                              const SyntheticDataset& ds) {
    std::vector<VideoAnnotation> all = ds.train_videos;
    all.insert(all.end(), ds.test_videos.begin(), ds.test_videos.end());
    return make_provider(cfg, all);
  }
};

std::string dir_digest(const fs::path& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path().string());
  }
  std::sort(files.begin(), files.end());
  std::string digest;
  for (const auto& f : files) {
    std::ifstream in(f, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    digest += fs::path(f).filename().string() + ":" +
              std::to_string(fnv1a(kFnvOffset, ss.str())) + ";";
  }
  return digest;
}

}  // namespace

TEST_CASE("gen_synthetic is deterministic and invariant-clean") {
  const auto vocab = default_synthetic_vocab();
  const auto d1 = gen_synthetic(77, 3, 2, vocab);
  const auto d2 = gen_synthetic(77, 3, 2, vocab);
  const auto d3 = gen_synthetic(78, 3, 2, vocab);

  const fs::path base = fs::temp_directory_path() / "ovvrd_gen";
  fs::remove_all(base);
  write_dataset(d1, (base / "a").string());
  write_dataset(d2, (base / "b").string());
  write_dataset(d3, (base / "c").string());
  CHECK(dir_digest(base / "a") == dir_digest(base / "b"));
  CHECK(dir_digest(base / "a") != dir_digest(base / "c"));

  // Every generated file loads and passes validation.
  const auto loaded = load_annotation_dir((base / "a" / "train").string());
  CHECK(loaded.size() == 3);
  for (const auto& v : loaded) {
    CHECK(v.frame_count == 16);
    CHECK_FALSE(v.relations.empty());
    for (const auto& r : v.relations) CHECK(vocab.is_base_predicate(r.predicate));
  }
}

TEST_CASE("planted signal: tracklet classification is perfect on generated data") {
  Config cfg = tiny_config();
  World w(cfg, 3);
  std::size_t checked = 0;
  for (const auto& v : w.ds.train_videos) {
    for (const auto& t : v.tracklets) {
      const auto dist = w.model.classify(v.video_id, t, CategoryScope::kAll);
      CHECK(dist.top_label() == *t.category());
      ++checked;
    }
  }
  CHECK(checked >= 6);
}

TEST_CASE("split leakage guard rejects novel categories in training data") {
  Config cfg = tiny_config();
  World w(cfg);

  // Corrupt a copy with a novel predicate.
  VideoAnnotation bad = w.ds.train_videos[0];
  bad.relations[0].predicate = w.ds.vocab.predicates_novel[0];
  CHECK_THROWS_AS(build_pairs(bad, w.ds.vocab, cfg.t, true), SplitLeakError);

  // And with a novel object category.
  VideoAnnotation bad2 = w.ds.train_videos[0];
  bad2.tracklets[0].set_category(w.ds.vocab.objects_novel[0]);
  bad2.relations.clear();
  CHECK_THROWS_AS(build_pairs(bad2, w.ds.vocab, cfg.t, true), SplitLeakError);

  CHECK_NOTHROW(build_pairs(w.ds.train_videos[0], w.ds.vocab, cfg.t, true));
}

TEST_CASE("training is deterministic and never touches frozen state") {
  Config cfg = tiny_config();

  auto run = [&]() {
    World w(cfg);
    const auto frozen_before = w.model.frozen_fingerprint();
    const auto provider_before = w.provider->fingerprint();
    Trainer trainer(w.model, w.ds.train_videos);
    const auto result = trainer.run(nullptr);
    return std::make_tuple(result, w.model.frozen_fingerprint(), provider_before,
                           w.provider->fingerprint(), frozen_before);
  };

  const auto [r1, frozen_after1, pb1, pa1, fb1] = run();
  const auto [r2, frozen_after2, pb2, pa2, fb2] = run();

  REQUIRE(r1.steps.size() == r2.steps.size());
  REQUIRE(r1.steps.size() >= 2);
  REQUIRE(r1.steps.size() <= 6);  // capped by train.max_steps
  for (std::size_t i = 0; i < r1.steps.size(); ++i) {
    CHECK(r1.steps[i].loss.total == r2.steps[i].loss.total);  // exact
    CHECK(r1.steps[i].loss.l_rel == r2.steps[i].loss.l_rel);
    CHECK(std::isfinite(r1.steps[i].loss.total));
    CHECK(r1.steps[i].loss.total >= 0.0);
  }
  CHECK(fb1 == frozen_after1);
  CHECK(pb1 == pa1);
  CHECK(fb1 == fb2);
}

TEST_CASE("training log lines are machine parsable") {
  Config cfg = tiny_config();
  cfg.max_steps = 2;
  World w(cfg);
  Trainer trainer(w.model, w.ds.train_videos);
  std::ostringstream log;
  trainer.run(&log);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    ++n;
    CHECK(line.find("step=") == 0);
    for (const char* key : {"l_obj_sub=", "l_rel=", "l_int=", "total=", "lr="}) {
      CHECK(line.find(key) != std::string::npos);
    }
  }
  CHECK(n == 2);
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bit-exactly") {
  Config cfg = tiny_config();
  cfg.max_steps = 3;
  World w(cfg);
  Trainer trainer(w.model, w.ds.train_videos);
  trainer.run(nullptr);

  const auto pairs = build_pairs(w.ds.train_videos[0], w.ds.vocab, cfg.t, true);
  REQUIRE_FALSE(pairs.empty());
  w.model.set_train(false);
  const auto before = w.model.forward_pair(pairs[0], CategoryScope::kAll);

  const fs::path path = fs::temp_directory_path() / "ovvrd_ckpt.json";
  save_checkpoint(w.model, trainer.optimizer(), path.string());

  World fresh(cfg);
  nn::AdamW opt2(nn::AdamW::Options{.weight_decay = cfg.weight_decay});
  load_checkpoint(fresh.model, opt2, path.string());
  fresh.model.set_train(false);
  const auto after = fresh.model.forward_pair(pairs[0], CategoryScope::kAll);

  CHECK(nn::bit_equal(before.rel_cosines.value(), after.rel_cosines.value()));
  CHECK(nn::bit_equal(before.sims_s.value(), after.sims_s.value()));
  CHECK(nn::bit_equal(before.int_probs.value(), after.int_probs.value()));
  CHECK(opt2.step_count() == trainer.optimizer().step_count());

  // Config mismatch is rejected.
  Config other = cfg;
  other.lr = 0.5;
  World wrong(other);
  nn::AdamW opt3;
  CHECK_THROWS_AS(load_checkpoint(wrong.model, opt3, path.string()), ValidationError);
}

TEST_CASE("infer handles missing pairs and keeps scores sorted") {
  Config cfg = tiny_config();
  World w(cfg);

  VideoAnnotation lonely;
  lonely.video_id = "lonely";
  lonely.frame_count = 4;
  lonely.width = 100;
  lonely.height = 100;
  lonely.tracklets.emplace_back(0, "dog", 0, std::vector<BBox>(4, BBox{0, 0, 10, 10}));
  lonely.validate();
  std::ostringstream warn;
  const auto empty = infer(w.model, lonely, eval::Task::kPredCls, &warn);
  CHECK(empty.relations.empty());
  CHECK(warn.str().find("lonely") != std::string::npos);

  const auto preds = infer(w.model, w.ds.train_videos[0], eval::Task::kPredCls);
  REQUIRE_FALSE(preds.relations.empty());
  for (std::size_t i = 1; i < preds.relations.size(); ++i) {
    CHECK(preds.relations[i - 1].score >= preds.relations[i].score);
  }
  CHECK(preds.relations.size() <= cfg.top_n);

  // All emitted predicates come from the full vocabulary; subjects/objects
  // are ground-truth labels under predcls.
  for (const auto& r : preds.relations) {
    const auto all_preds = w.ds.vocab.all_predicates();
    CHECK(std::find(all_preds.begin(), all_preds.end(), r.predicate) != all_preds.end());
  }
}

TEST_CASE("external encoder config is honored") {
  Config cfg = tiny_config();
  cfg.encoder_kind = "external";
  cfg.encoder_dir = "";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("config file parsing with overrides and env seed") {
  const fs::path path = fs::temp_directory_path() / "ovvrd_cfg.txt";
  std::ofstream(path) << "model.d=32\n# comment line\ntrain.lr=0.01\n"
                      << "train.decay_epochs=5,9\n";
  Config cfg;
  cfg.load_file(path.string());
  CHECK(cfg.d == 32);
  CHECK(cfg.lr == 0.01);
  CHECK(cfg.decay_epochs == std::vector<int>{5, 9});
  cfg.set_pair("model.d=64");
  CHECK(cfg.d == 64);
  CHECK_THROWS_AS(cfg.set_pair("bogus.key=1"), ConfigError);
  CHECK_THROWS_AS(cfg.set_pair("no_equals"), ConfigError);

  setenv("OVVRD_SEED", "123", 1);
  cfg.apply_env();
  unsetenv("OVVRD_SEED");
  CHECK(cfg.seed == 123);

  Config c2;
  c2.batch_size = 0;
  CHECK_THROWS_AS(c2.validate(), ConfigError);
}
