#include <gtest/gtest.h>

#include "scenead/synth/fixture.hpp"
#include "scenead/train/trainer.hpp"
#include "support/tempdir.hpp"

using namespace scenead;
using namespace scenead::train;
using scenead::testing::TempDir;

namespace {

// 16 train / 8 query images at 64x64.
struct SmallFixture {
  TempDir dir{"scenead-train"};
  synth::FixtureResult fx;
  SmallFixture() {
    synth::FixtureSpec f;
    f.n_train = 16;
    f.n_query = 8;
    f.image_size = 64;
    fx = synth::build_fixture(dir.path(), f);
  }
};

SmallFixture& fixture() {
  static SmallFixture f;
  return f;
}

RunConfig small_run(const fs::path& out, std::uint64_t seed, int epochs = 3) {
  RunConfig r;
  r.dataset = fixture().dir.path().string();
  r.out_dir = out.string();
  r.model.backbone = BackboneKind::tiny_random;
  r.model.width_divisor = 16;
  r.model.input_h = r.model.input_w = 64;
  r.train.max_epochs = epochs;
  r.train.batch_size = 4;
  r.train.seed = seed;
  return r;
}

}  // namespace

TEST(Split, StratifiedDisjointAndDeterministic) {
  std::vector<std::size_t> counts{5, 0, 3, 0, 7, 1, 0, 9, 2, 4};
  auto a = stratified_split(counts, 0.2, 1), b = stratified_split(counts, 0.2, 1);
  EXPECT_EQ(a.val, b.val);
  EXPECT_EQ(a.val.size() + a.test.size(), counts.size());
  std::set<std::size_t> all(a.val.begin(), a.val.end());
  for (auto i : a.test) EXPECT_TRUE(all.insert(i).second);
  // 7 anomalous -> round(1.4) = 1, 3 empty -> round(0.6) = 1
  std::size_t anomalous_val = 0;
  for (auto i : a.val) anomalous_val += counts[i] > 0;
  EXPECT_EQ(anomalous_val, 1u);
  EXPECT_EQ(a.val.size(), 2u);
  EXPECT_THROW(stratified_split({0, 0, 0}, 0.2, 1), TrainError);
  // tiny anomalous stratum still lands on both sides
  auto c = stratified_split({1, 1, 0, 0, 0, 0, 0, 0}, 0.1, 3);
  std::size_t av = 0, at = 0;
  for (auto i : c.val) av += i < 2;
  for (auto i : c.test) at += i < 2;
  EXPECT_EQ(av, 1u);
  EXPECT_EQ(at, 1u);
}

TEST(BestEpoch, ArgmaxWithEarliestTie) {
  EXPECT_EQ(best_epoch_of({0.1, 0.3, 0.3, 0.2}), 2);
  EXPECT_EQ(best_epoch_of({0.5}), 1);
  EXPECT_EQ(best_epoch_of({0.0, 0.0}), 1);
  EXPECT_EQ(best_epoch_of({}), 0);
}

TEST(Config, JsonRoundTripAndManifestAsConfig) {
  auto r = small_run("/tmp/x", 4);
  r.train.augmentation = data::Augmentation::both;
  const auto j = to_json(r);
  const auto back = run_config_from_json(j);
  EXPECT_EQ(to_json(back), j);
  EXPECT_EQ(config_hash(back), config_hash(r));
  EXPECT_EQ(run_config_from_json(nlohmann::json{{"config", j}, {"best_epoch", 3}}).train.seed, 4u);
  auto other = r;
  other.train.seed = 5;
  EXPECT_NE(config_hash(other), config_hash(r));
  auto bad = j;
  bad["train"]["batch_size"] = 0;
  EXPECT_THROW(run_config_from_json(bad), std::invalid_argument);
}

TEST(Train, SmokeLossDecreasesTeacherUntouched) {
  TempDir out;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto m = train_model(small_run(out / ("s" + std::to_string(seed)), seed));
    ASSERT_EQ(m.train_loss.size(), 3u);
    EXPECT_GT(m.train_loss[0], m.train_loss[1]) << seed;
    EXPECT_GT(m.train_loss[1], m.train_loss[2]) << seed;
    EXPECT_EQ(m.teacher_hash_before, m.teacher_hash_after);
    EXPECT_EQ(m.best_epoch, best_epoch_of(m.val_f1));
    EXPECT_EQ(m.best_val_f1, m.val_f1[static_cast<std::size_t>(m.best_epoch - 1)]);
    EXPECT_EQ(m.validation_refs.size() + m.test_refs.size(), 8u);
    for (const auto& v : m.validation_refs)
      EXPECT_EQ(std::find(m.test_refs.begin(), m.test_refs.end(), v), m.test_refs.end());
    EXPECT_TRUE(fs::exists(m.checkpoint));
    const auto disk = io::read_json(out / ("s" + std::to_string(seed)) / "manifest.json");
    EXPECT_EQ(disk["best_epoch"], m.best_epoch);
    EXPECT_EQ(disk["config_hash"], config_hash(m.config));
  }
}

TEST(Train, DeterministicAndCheckpointReproducesValidation) {
  TempDir out;
  auto a = train_model(small_run(out / "a", 7, 2));
  auto b = train_model(small_run(out / "b", 7, 2));
  ASSERT_EQ(a.train_loss.size(), b.train_loss.size());
  for (std::size_t i = 0; i < a.train_loss.size(); ++i) {
    EXPECT_EQ(a.train_loss[i], b.train_loss[i]);
    EXPECT_EQ(a.val_f1[i], b.val_f1[i]);
  }
  EXPECT_EQ(a.test_report.pixel_f1, b.test_report.pixel_f1);

  auto ck = load_checkpoint(a.checkpoint);
  EXPECT_EQ(ck.meta["epoch"], a.best_epoch);
  const auto ds = data::load_dataset(fixture().dir.path(), data::Augmentation::none);
  const auto q = load_queries(ds, ck.model->config());
  const auto cache = cache_teacher(*ck.model, q.images);
  std::vector<std::size_t> val_idx;
  for (std::size_t i = 0; i < q.refs.size(); ++i)
    if (std::find(a.validation_refs.begin(), a.validation_refs.end(), q.refs[i]) != a.validation_refs.end())
      val_idx.push_back(i);
  EXPECT_EQ(evaluate_indices(*ck.model, cache, q, val_idx).pixel_f1, a.best_val_f1);
}

TEST(Train, RejectsMissingAugmentationAndBadLr) {
  TempDir out;
  auto r = small_run(out / "x", 0, 1);
  r.train.augmentation = data::Augmentation::inv;
  EXPECT_THROW(train_model(r), data::DatasetError);
  r.train.augmentation = data::Augmentation::none;
  r.train.lr = 1e30;
  EXPECT_THROW(train_model(r), TrainError);
}

TEST(Train, ManifestRoundTrip) {
  TempDir out;
  auto m = train_model(small_run(out / "m", 3, 1));
  auto back = run_manifest_from_json(io::read_json(out / "m" / "manifest.json"));
  EXPECT_EQ(to_json(back), to_json(m));
}
