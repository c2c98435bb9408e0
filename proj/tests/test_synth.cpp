#include <gtest/gtest.h>

#include "scenead/synth/fixture.hpp"
#include "support/tempdir.hpp"

using namespace scenead;
using namespace scenead::synth;
using scenead::testing::TempDir;

namespace {

FixtureSpec small_spec(int n_train = 8, int n_query = 4) {
  FixtureSpec f;
  f.seed = 7;
  f.n_train = n_train;
  f.n_query = n_query;
  f.image_size = 64;
  return f;
}

class FailingLocalizer : public LocalizerHandle {
 public:
  FailingLocalizer(LocalizerHandle& base, std::set<std::string> fail) : base_(base), fail_(std::move(fail)) {}
  std::string backend_id() const override { return "failing"; }
  std::optional<CameraPose> localize(const data::ImageTensor& q, const std::string& ref) override {
    if (fail_.count(ref)) return std::nullopt;
    return base_.localize(q, ref);
  }

 private:
  LocalizerHandle& base_;
  std::set<std::string> fail_;
};

double mean_abs_diff(const data::ImageTensor& a, const data::ImageTensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.data.numel(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.numel());
}

}  // namespace

TEST(Fixture, TreeValidatesAndIsDeterministic) {
  TempDir a, b;
  auto ra = build_fixture(a.path(), small_spec());
  build_fixture(b.path(), small_spec());
  EXPECT_EQ(ra.dataset.train_images.size(), 8u);
  EXPECT_EQ(ra.dataset.test_images.size(), 4u);
  EXPECT_EQ(ra.dataset.test_masks.size(), 4u);
  EXPECT_EQ(ra.dataset.poses.size(), 12u);
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(e.path(), a.path());
    ASSERT_TRUE(fs::exists(b.path() / rel)) << rel;
    EXPECT_EQ(io::read_text(e.path()), io::read_text(b.path() / rel)) << rel;
  }
  EXPECT_EQ(files, 8u + 4u + 4u + 3u);
  for (double fr : ra.stats.per_image) {
    if (ra.warnings.empty()) {
      EXPECT_GE(fr, 0.0003);
      EXPECT_LE(fr, 0.05);
    }
  }
}

TEST(Inv, CountsAndMerge) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec());
  ProceduralRenderer r(fx.scene);
  auto res = build_inv_augmentation(fx.dataset, r, 12);
  EXPECT_EQ(res.views.size(), 84u);
  auto ds = data::load_dataset(dir.path(), data::Augmentation::inv);
  EXPECT_EQ(ds.train_images.size(), 8u + 84u);
  EXPECT_EQ(ds.synthesized_count(), 84u);
  EXPECT_EQ(ds.test_images.size(), 4u);
  for (const auto& v : res.views) EXPECT_TRUE(ds.poses.count(v.path));
  for (const auto& t : ds.test_images) EXPECT_EQ(t.path.rfind("test/", 0), 0u);
  EXPECT_EQ(ds.manifest["augmentation"]["inv"]["renders"], 84);
}

TEST(Inv, SinglePoseGivesNothing) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec(1, 1));
  ProceduralRenderer r(fx.scene);
  EXPECT_EQ(build_inv_augmentation(fx.dataset, r, 12).views.size(), 0u);
}

TEST(Inv, RendersConvergeToCapturedView) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec());
  const auto& ds = fx.dataset;
  const auto& k = ds.intrinsics.at("cam0");
  const auto a = ds.poses.at(ds.train_images[0].path), b = ds.poses.at(ds.train_images[1].path);
  const auto captured = render::render_procedural(fx.scene, a, k);
  double prev = 1e9;
  for (double t : {0.5, 0.25, 0.125, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 256, 0.0}) {
    const double d = mean_abs_diff(render::render_procedural(fx.scene, geometry::interpolate_pose(a, b, t), k), captured);
    EXPECT_LE(d, prev + 1e-12) << t;
    prev = d;
  }
  EXPECT_EQ(prev, 0.0);
}

TEST(Inv, MissingPoses) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec(3, 1));
  auto ds = fx.dataset;
  ds.poses.erase(ds.train_images[1].path);
  ProceduralRenderer r(fx.scene);
  EXPECT_THROW(build_inv_augmentation(ds, r, 2, 0, false), AugmentError);
}

TEST(Qanv, GroundTruthLocalizerAlignsWithQueries) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec());
  ProceduralRenderer r(fx.scene);
  GroundTruthLocalizer gt(query_truth(fx.dataset));
  auto res = build_qanv_augmentation(fx.dataset, r, gt);
  ASSERT_EQ(res.views.size(), 4u);
  EXPECT_EQ(res.failures, 0u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& q = fx.dataset.test_images[i];
    EXPECT_EQ((res.views[i].pose.translation - fx.dataset.poses.at(q.path).translation).norm(), 0.0);
    const auto query = io::read_png(dir / q.path);
    const auto render = io::read_png(dir / res.views[i].path);
    const auto mask = data::load_binary_mask(dir / fx.dataset.test_masks[i]);
    std::size_t outside = 0, agree = 0, inside_differ = 0;
    for (std::size_t p = 0; p < mask.values.size(); ++p) {
      int d = 0;
      for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(query.pixels[3 * p + c] - render.pixels[3 * p + c]));
      if (mask.values[p]) {
        inside_differ += d > 2;
      } else {
        ++outside;
        agree += d <= 2;
      }
    }
    EXPECT_GE(static_cast<double>(agree) / outside, 0.99);
    EXPECT_EQ(inside_differ, mask.count());
  }
  auto ds = data::load_dataset(dir.path(), data::Augmentation::qanv);
  EXPECT_EQ(ds.synthesized_count(), 4u);
}

TEST(Qanv, FailuresAreSkippedAndCounted) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec());
  ProceduralRenderer r(fx.scene);
  GroundTruthLocalizer gt(query_truth(fx.dataset));
  FailingLocalizer failing(gt, {fx.dataset.test_images[2].path});
  auto res = build_qanv_augmentation(fx.dataset, r, failing);
  EXPECT_EQ(res.views.size(), 3u);
  EXPECT_EQ(res.failures, 1u);
  auto m = io::read_json(dir / data::layout::manifest);
  EXPECT_EQ(m["augmentation"]["qanv"]["failures"], 1);

  FailingLocalizer all(gt, {fx.dataset.test_images[0].path, fx.dataset.test_images[1].path,
                            fx.dataset.test_images[2].path, fx.dataset.test_images[3].path});
  auto none = build_qanv_augmentation(fx.dataset, r, all, false);
  EXPECT_TRUE(none.views.empty());
  EXPECT_TRUE(none.provenance.contains("warning"));
}

TEST(Localizer, NoisyPerturbationMagnitude) {
  std::map<std::string, CameraPose> truth{{"test/a.png", geometry::look_at({5, 0, 2}, {0, 0, 0})}};
  NoisyLocalizer n(truth, 10.0, 3);
  data::ImageTensor dummy;
  auto p = n.localize(dummy, "test/a.png");
  ASSERT_TRUE(p);
  EXPECT_NEAR(geometry::rotation_angle(p->rotation, truth.begin()->second.rotation), M_PI / 180.0, 1e-9);
  EXPECT_NEAR((p->translation - truth.begin()->second.translation).norm(), 0.1, 1e-12);
  auto again = n.localize(dummy, "test/a.png");
  EXPECT_EQ(again->translation, p->translation);
  EXPECT_FALSE(n.localize(dummy, "test/b.png"));
}

TEST(Both, MergesEverything) {
  TempDir dir;
  auto fx = build_fixture(dir.path(), small_spec());
  ProceduralRenderer r(fx.scene);
  GroundTruthLocalizer gt(query_truth(fx.dataset));
  build_inv_augmentation(fx.dataset, r, 2);
  build_qanv_augmentation(data::load_dataset(dir.path(), data::Augmentation::none), r, gt);
  auto ds = data::load_dataset(dir.path(), data::Augmentation::both);
  EXPECT_EQ(ds.train_images.size(), 8u + 4u + 14u);
  EXPECT_EQ(ds.poses.size(), 12u + 4u + 14u);
}
