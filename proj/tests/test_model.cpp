#include <gtest/gtest.h>

#include <random>

#include "scenead/core/optim.hpp"
#include "scenead/model/scoring.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

using namespace scenead;
using scenead::testing::check_entries;
using scenead::testing::random_tensor;
using scenead::testing::sample_indices;

namespace {

ModelConfig tiny(int size = 64, int divisor = 8, bool attention = true) {
  ModelConfig c;
  c.backbone = BackboneKind::tiny_random;
  c.width_divisor = divisor;
  c.input_h = c.input_w = size;
  c.use_attention_modules = attention;
  return c;
}

template <typename T>
Tensor<T> random_input(std::size_t n, std::size_t h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0, 1);
  Tensor<T> t({n, 3, h, h});
  for (auto& v : t.vec()) v = static_cast<T>(d(rng));
  return t;
}

// Table rows for a module with input (C, H, H): conv, attention, pool for the
// two encoder blocks; six bottleneck rows at 256 plus the 256->128 row;
// upsample and conv for the two decoder blocks.
std::vector<Shape> table_rows(std::size_t c, std::size_t h) {
  std::vector<Shape> r{{1, 64, h, h},         {1, 64, h, h},         {1, 64, h / 2, h / 2},
                       {1, 128, h / 2, h / 2}, {1, 128, h / 2, h / 2}, {1, 128, h / 4, h / 4}};
  for (int i = 0; i < 6; ++i) r.push_back({1, 256, h / 4, h / 4});
  r.push_back({1, 128, h / 4, h / 4});
  r.push_back({1, 128, h / 2, h / 2});
  r.push_back({1, 64, h / 2, h / 2});
  r.push_back({1, 64, h, h});
  r.push_back({1, c, h, h});
  return r;
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, static_cast<double>(std::abs(a[i] - b[i])));
  return m;
}

}  // namespace

TEST(Shapes, AttentionModulesFollowTableRowByRow) {
  ModelConfig cfg;  // full width, 256 input
  const auto specs = cfg.attention_specs();
  EXPECT_EQ(specs[0], (AttentionSpec{1024, 16, 1024, 16}));
  EXPECT_EQ(specs[1], (AttentionSpec{512, 32, 512, 32}));
  EXPECT_EQ(specs[2], (AttentionSpec{256, 64, 256, 64}));
  std::mt19937_64 rng(3);
  for (const auto& spec : specs) {
    StudentAttentionModule<float> m(spec, cfg.attention_widths(), rng);
    typename StudentAttentionModule<float>::Trace trace;
    Tensor<float> in({1, static_cast<std::size_t>(spec.c_in), static_cast<std::size_t>(spec.h_in),
                      static_cast<std::size_t>(spec.h_in)},
                     0.1f);
    auto y = m(Var<float>(in), false, true, &trace);
    const auto rows = table_rows(spec.c_out, spec.h_in);
    ASSERT_EQ(trace.stages.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) EXPECT_EQ(trace.stages[i], rows[i]) << "row " << i;
    EXPECT_EQ(y.shape(), rows.back());
  }
}

TEST(Shapes, AttentionModuleRejectsWrongInput) {
  ModelConfig cfg = tiny();
  std::mt19937_64 rng(4);
  StudentAttentionModule<float> m(cfg.attention_specs()[0], cfg.attention_widths(), rng);
  EXPECT_THROW(m(Var<float>(Tensor<float>({1, 7, 4, 4})), false), ShapeError);
}

TEST(Shapes, TeacherPyramidFullAndTiny) {
  {
    ModelConfig cfg;
    cfg.use_attention_modules = false;
    OmniADModel<float> m(cfg, 0);
    auto t = m.teacher_forward(Var<float>(random_input<float>(1, 256, 2)));
    EXPECT_EQ(t.shapes(), (std::vector<Shape>{{1, 256, 64, 64}, {1, 512, 32, 32}, {1, 1024, 16, 16}}));
  }
  OmniADModel<float> m(tiny(256), 0);
  auto t = m.teacher_forward(Var<float>(random_input<float>(1, 256, 2)));
  EXPECT_EQ(t.shapes(), (std::vector<Shape>{{1, 32, 64, 64}, {1, 64, 32, 32}, {1, 128, 16, 16}}));
  EXPECT_THROW(m.teacher_forward(Var<float>(random_input<float>(1, 128, 2))), ShapeError);
}

TEST(Shapes, StudentMirrorsTeacher) {
  for (int size : {64, 128, 256}) {
    for (bool att : {true, false}) {
      OmniADModel<float> m(tiny(size, 8, att), 1);
      auto f = m.forward(Var<float>(random_input<float>(2, size, 3)), false);
      EXPECT_EQ(f.student.shapes(), f.teacher.shapes()) << size << " att=" << att;
      for (const auto& l : f.student.levels) EXPECT_TRUE(l.value().all_finite());
    }
  }
  ModelConfig full;
  full.input_h = full.input_w = 64;
  OmniADModel<float> m(full, 1);
  auto f = m.forward(Var<float>(random_input<float>(1, 64, 3)), false);
  EXPECT_EQ(f.student.shapes(), f.teacher.shapes());
}

TEST(Loss, IdenticalIsZeroOppositeIsTwo) {
  std::mt19937_64 rng(5);
  FeaturePyramid<double> t, s, neg;
  for (std::size_t c : {3, 5}) {
    auto v = random_tensor({2, c, 4, 4}, rng);
    t.levels.emplace_back(v);
    s.levels.emplace_back(v);
    auto n = v;
    n *= -2.0;
    neg.levels.emplace_back(n);
  }
  EXPECT_NEAR(distillation_loss(t, s).value()[0], 0.0, 1e-12);
  EXPECT_NEAR(distillation_loss(t, neg).value()[0], 2.0, 1e-12);
}

TEST(Loss, MatchesDirectSum) {
  std::mt19937_64 rng(6);
  FeaturePyramid<double> t, s;
  const std::vector<std::array<std::size_t, 3>> dims{{4, 6, 6}, {6, 3, 3}, {8, 2, 2}};
  for (auto [c, h, w] : dims) {
    t.levels.emplace_back(random_tensor({2, c, h, w}, rng));
    s.levels.emplace_back(random_tensor({2, c, h, w}, rng));
  }
  double expect = 0;
  for (std::size_t l = 0; l < 3; ++l) {
    const auto& a = t.levels[l].value();
    const auto& b = s.levels[l].value();
    const auto [c, h, w] = dims[l];
    double acc = 0;
    for (std::size_t n = 0; n < 2; ++n)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          double ab = 0, aa = 0, bb = 0;
          for (std::size_t k = 0; k < c; ++k) {
            ab += a.at(n, k, y, x) * b.at(n, k, y, x);
            aa += a.at(n, k, y, x) * a.at(n, k, y, x);
            bb += b.at(n, k, y, x) * b.at(n, k, y, x);
          }
          acc += 1 - ab / std::sqrt(aa * bb);
        }
    expect += acc / static_cast<double>(2 * h * w);
  }
  EXPECT_NEAR(distillation_loss(t, s).value()[0], expect / 3, 1e-12);
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  auto cfg = tiny(64, 32);
  OmniADModel<double> m(cfg, 9);
  m.set_attention_gates(0.5);
  auto st = m.trainable_state();
  nn::StateList<double> ts;
  m.collect_teacher(ts);
  ASSERT_LE(st.parameter_count() + ts.parameter_count(), 100000u);
  const auto x = random_input<double>(2, 64, 10);
  auto teacher = m.teacher_forward(Var<double>(x));
  auto loss_fn = [&]() {
    auto f = m.forward_from_teacher(teacher, true);
    return distillation_loss(f.teacher, f.student).value()[0];
  };
  auto f = m.forward_from_teacher(teacher, true);
  backward(distillation_loss(f.teacher, f.student));
  std::mt19937_64 rng(11);
  scenead::testing::EntryTally t;
  for (auto& p : st.params) {
    ASSERT_TRUE(p.var.has_grad()) << p.name;
    auto idx = sample_indices(p.var.value().numel(), 2, rng);
    auto r = check_entries(p.var, p.var.grad().vec(), idx, loss_fn, 1e-6);
    const auto bad = t.bad;
    // key biases shift every logit of a row equally: true gradient 0
    scenead::testing::tally(t, r, 1e-4, 1e-9);
    EXPECT_EQ(t.bad, bad) << p.name;
  }
  EXPECT_GT(t.resolved, 100u);
  RecordProperty("worst_rel_error", std::to_string(t.worst_rel));
}

TEST(Scoring, CellPerturbationLightsUpItsFootprint) {
  // one differing cell on the 4x4 deepest level of a 64x64 image
  FeaturePyramid<float> t, s;
  for (std::size_t h : {16, 8, 4}) {
    Tensor<float> v({1, 2, h, h}, 1.0f);
    t.levels.emplace_back(v);
    if (h == 4) v.at(0, 1, 2, 1) = -1.0f;
    s.levels.emplace_back(v);
  }
  auto maps = anomaly_maps_from_features(t, s, 64, 64, 0.0);
  ASSERT_EQ(maps.size(), 1u);
  const auto& m = maps[0];
  std::size_t by = 0, bx = 0;
  for (std::size_t y = 0; y < 64; ++y)
    for (std::size_t x = 0; x < 64; ++x)
      if (m.at(y, x) > m.at(by, bx)) by = y, bx = x;
  // cell (2, 1) covers rows 32..47, cols 16..31
  EXPECT_GE(by, 32u);
  EXPECT_LT(by, 48u);
  EXPECT_GE(bx, 16u);
  EXPECT_LT(bx, 32u);
  EXPECT_GT(m.at(by, bx), 0.9f);
  EXPECT_NEAR(m.at(0, 0), 0.0f, 1e-6);
  EXPECT_NEAR(m.at(63, 63), 0.0f, 1e-6);
  EXPECT_EQ(m.level_maps.size(), 3u);

  auto blurred = anomaly_maps_from_features(t, s, 64, 64, 4.0)[0];
  double a = 0, b = 0;
  for (std::size_t i = 0; i < m.scores.size(); ++i) a += m.scores[i], b += blurred.scores[i];
  EXPECT_NEAR(a, b, 1e-3 * a);
  EXPECT_LT(blurred.at(by, bx), m.at(by, bx));
}

TEST(Training, TeacherStaysFrozenStudentMoves) {
  OmniADModel<float> m(tiny(64, 16), 2);
  std::vector<Tensor<float>> tvals, svals;
  nn::StateList<float> ts;
  m.collect_teacher(ts);
  for (auto& p : ts.params) tvals.push_back(p.var.value());
  for (auto& b : ts.buffers) tvals.push_back(*b.tensor);
  auto st = m.trainable_state();
  for (auto& p : st.params) svals.push_back(p.var.value());
  std::vector<Var<float>> params;
  for (auto& p : st.params) params.push_back(p.var);
  Adam<float> opt(params, {});
  for (int i = 0; i < 3; ++i) {
    opt.zero_grad();
    auto f = m.forward(Var<float>(random_input<float>(2, 64, 20 + i)), true);
    backward(distillation_loss(f.teacher, f.student));
    opt.step();
  }
  std::size_t k = 0;
  for (auto& p : ts.params) {
    EXPECT_FALSE(p.var.has_grad()) << p.name;
    EXPECT_EQ(p.var.value(), tvals[k++]) << p.name;
  }
  for (auto& b : ts.buffers) EXPECT_EQ(*b.tensor, tvals[k++]) << b.name;
  std::size_t moved = 0;
  for (std::size_t i = 0; i < st.params.size(); ++i) moved += !(st.params[i].var.value() == svals[i]);
  EXPECT_GT(moved, st.params.size() / 2);
}

TEST(Ablation, SharedPartsIdenticalWithAndWithoutAttention) {
  OmniADModel<float> with(tiny(), 5), without(tiny(64, 8, false), 5);
  auto a = with.trainable_state(), b = without.trainable_state();
  std::map<std::string, Tensor<float>> wa;
  for (auto& p : a.params) wa[p.name] = p.var.value();
  std::size_t shared = 0;
  for (auto& p : b.params) {
    ASSERT_TRUE(wa.count(p.name)) << p.name;
    EXPECT_EQ(wa[p.name], p.var.value()) << p.name;
    ++shared;
  }
  EXPECT_LT(shared, a.params.size());
  for (auto& p : a.params) EXPECT_TRUE(p.name.rfind("attention.", 0) == 0 || wa.count(p.name));
}

TEST(Attention, ZeroGateEqualsBypass) {
  OmniADModel<float> m(tiny(), 6);
  const auto x = random_input<float>(2, 64, 30);
  auto gated = m.forward(Var<float>(x), false);
  m.set_self_attention_enabled(false);
  auto bypass = m.forward(Var<float>(x), false);
  for (std::size_t l = 0; l < 3; ++l)
    EXPECT_EQ(gated.student.levels[l].value(), bypass.student.levels[l].value());
  m.set_self_attention_enabled(true);
  m.set_attention_gates(0.5f);
  auto open = m.forward(Var<float>(x), false);
  EXPECT_GT(max_abs_diff(open.student.levels[0].value(), bypass.student.levels[0].value()), 1e-4);
}

TEST(Attention, FarInputsReachOutputOnlyThroughAttention) {
  // A^3 of a tiny 256 model runs on a 64x64 grid; the conv U-Net cannot carry
  // (0,0) to (63,63), global attention can.
  auto cfg = tiny(256);
  std::mt19937_64 rng(8);
  StudentAttentionModule<double> a(cfg.attention_specs()[2], cfg.attention_widths(), rng);
  const auto spec = a.spec();
  const std::size_t c = spec.c_in, h = spec.h_in;
  auto input_grad_at_origin = [&](bool sa) {
    Var<double> x(random_tensor({1, c, h, h}, rng), true);
    auto y = a(x, false, sa);
    Tensor<double> seed(y.shape());
    for (std::size_t k = 0; k < c; ++k) seed.at(0, k, h - 1, h - 1) = 1.0;
    backward(y, seed);
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += std::abs(x.grad().at(0, k, 0, 0));
    return s;
  };
  a.set_gates(0.5);
  EXPECT_GT(input_grad_at_origin(true), 1e-8);
  EXPECT_EQ(input_grad_at_origin(false), 0.0);
}

TEST(Attention, ModuleGradientOnOddGrid) {
  ModelConfig cfg = tiny(64, 16);
  std::mt19937_64 rng(12);
  StudentAttentionModule<double> a({8, 9, 8, 9}, cfg.attention_widths(), rng);
  a.set_gates(0.7);
  Var<double> x(random_tensor({2, 8, 9, 9}, rng), true);
  auto y = a(x, true);
  const auto probe = random_tensor(y.shape(), rng);
  backward(y, probe);
  auto loss = [&]() {
    auto o = a(x, true);
    double s = 0;
    for (std::size_t i = 0; i < probe.numel(); ++i) s += o.value()[i] * probe[i];
    return s;
  };
  auto r = check_entries(x, x.grad().vec(), sample_indices(x.value().numel(), 80, rng), loss);
  EXPECT_LT(r.max_rel_error, 1e-5);
  nn::StateList<double> st;
  a.collect("a", st);
  // roundoff of the probe sum grows with its terms
  double mass = 0;
  for (std::size_t i = 0; i < probe.numel(); ++i) mass += std::abs(y.value()[i] * probe[i]);
  scenead::testing::EntryTally t;
  for (auto& p : st.params) {
    const auto bad = t.bad;
    scenead::testing::tally(t, check_entries(p.var, p.var.grad().vec(), sample_indices(p.var.value().numel(), 3, rng), loss),
                            1e-5, 1e-9 * std::max(1.0, mass));
    EXPECT_EQ(t.bad, bad) << p.name;
  }
  EXPECT_GT(t.resolved, 20u);
}

TEST(Weights, TeacherLoadsFromArchiveByTorchvisionNames) {
  scenead::testing::TempDir dir;
  auto cfg = tiny();
  cfg.teacher_seed = 1;
  OmniADModel<float> src(cfg, 0);
  nn::StateList<float> ts;
  src.collect_teacher(ts);
  io::TensorArchive ar;
  io::add_state(ar, ts, "teacher.");
  EXPECT_TRUE(ar.tensors.count("layer1.0.conv2.weight"));
  EXPECT_TRUE(ar.tensors.count("layer2.0.downsample.1.running_var"));
  io::save_archive(dir / "w.bin", ar);

  cfg.teacher_seed = 2;
  OmniADModel<float> other(cfg, 0);
  cfg.backbone_weights = (dir / "w.bin").string();
  OmniADModel<float> loaded(cfg, 0);
  const auto x = random_input<float>(1, 64, 40);
  auto a = src.teacher_forward(Var<float>(x)), b = loaded.teacher_forward(Var<float>(x)),
       c = other.teacher_forward(Var<float>(x));
  EXPECT_EQ(a.levels[2].value(), b.levels[2].value());
  EXPECT_FALSE(a.levels[2].value() == c.levels[2].value());

  auto wrong = tiny(64, 16);
  wrong.backbone_weights = cfg.backbone_weights;
  EXPECT_THROW((OmniADModel<float>(wrong, 0)), io::IoError);
}
