#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "scenead/core/optim.hpp"
#include "scenead/data/dataset.hpp"
#include "scenead/data/image.hpp"
#include "scenead/eval/metrics.hpp"
#include "scenead/io/archive.hpp"
#include "scenead/model/scoring.hpp"

namespace scenead::train {

namespace fs = std::filesystem;

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  int max_epochs = 100;
  int batch_size = 32;
  std::string optimizer = "adam";
  double lr = 0.005;
  std::array<double, 2> betas{0.5, 0.999};
  std::uint64_t seed = 0;
  // Validation/test partition of the query images; independent of `seed` so
  // every cell of a comparison is scored on the same images.
  std::uint64_t split_seed = 1234;
  double val_fraction = 0.2;
  data::Augmentation augmentation = data::Augmentation::none;

  void validate() const {
    if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (optimizer != "adam") throw std::invalid_argument("unsupported optimizer '" + optimizer + "'");
    if (!(lr > 0)) throw std::invalid_argument("lr must be > 0");
    if (!(betas[0] >= 0 && betas[0] < 1 && betas[1] >= 0 && betas[1] < 1))
      throw std::invalid_argument("betas must lie in [0, 1)");
    if (!(val_fraction > 0 && val_fraction < 1)) throw std::invalid_argument("val_fraction must lie in (0, 1)");
  }
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"max_epochs", c.max_epochs},   {"batch_size", c.batch_size}, {"optimizer", c.optimizer},
          {"lr", c.lr},                   {"betas", c.betas},           {"seed", c.seed},
          {"split_seed", c.split_seed},   {"val_fraction", c.val_fraction},
          {"augmentation", data::to_string(c.augmentation)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.optimizer = j.value("optimizer", c.optimizer);
  c.lr = j.value("lr", c.lr);
  c.betas = j.value("betas", c.betas);
  c.seed = j.value("seed", c.seed);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.val_fraction = j.value("val_fraction", c.val_fraction);
  c.augmentation = data::augmentation_from_string(j.value("augmentation", std::string("none")));
  c.validate();
  return c;
}

// Everything needed to reproduce one training run.
struct RunConfig {
  std::string dataset;
  std::string out_dir;
  ModelConfig model;
  TrainConfig train;
};

inline nlohmann::json to_json(const RunConfig& r) {
  nlohmann::json m = r.model;
  return {{"dataset", r.dataset}, {"out_dir", r.out_dir}, {"model", m}, {"train", to_json(r.train)}};
}

// Accepts a run config or a run manifest (whose "config" holds one).
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  const auto& c = j.contains("config") ? j.at("config") : j;
  RunConfig r;
  r.dataset = c.at("dataset").get<std::string>();
  r.out_dir = c.value("out_dir", std::string("runs/train"));
  r.model = c.value("model", nlohmann::json::object()).get<ModelConfig>();
  r.train = train_config_from_json(c.value("train", nlohmann::json::object()));
  return r;
}

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) h = (h ^ p[i]) * 0x100000001b3ULL;
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char b[17];
  std::snprintf(b, sizeof b, "%016llx", static_cast<unsigned long long>(v));
  return b;
}

inline std::string config_hash(const RunConfig& r) {
  const auto s = to_json(r).dump();
  return hex64(fnv1a(s.data(), s.size()));
}

template <typename T>
std::string state_hash(const nn::StateList<T>& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : s.params) h = fnv1a(p.var.value().data(), p.var.value().numel() * sizeof(T), h);
  for (const auto& b : s.buffers) h = fnv1a(b.tensor->data(), b.tensor->numel() * sizeof(T), h);
  return hex64(h);
}

// Indices into the query list, split into validation and final test images.
struct Split {
  std::vector<std::size_t> val, test;
};

// Fixed-seed draw stratified by whether the mask is empty; each stratum gives
// round(fraction * size) images to validation. A non-empty stratum of two or
// more images always contributes to both sides.
inline Split stratified_split(const std::vector<std::size_t>& mask_counts, double fraction, std::uint64_t seed) {
  if (mask_counts.size() < 2) throw TrainError("need at least two query images to split validation from test");
  std::vector<std::size_t> empty, anomalous;
  for (std::size_t i = 0; i < mask_counts.size(); ++i) (mask_counts[i] ? anomalous : empty).push_back(i);
  if (anomalous.empty()) throw TrainError("no query image has an anomalous pixel; validation F1 is undefined");
  std::mt19937_64 rng(seed);
  Split s;
  for (auto* stratum : {&anomalous, &empty}) {
    std::shuffle(stratum->begin(), stratum->end(), rng);
    auto k = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(stratum->size())));
    if (stratum == &anomalous && stratum->size() >= 2) k = std::clamp<std::size_t>(k, 1, stratum->size() - 1);
    k = std::min(k, stratum->size());
    s.val.insert(s.val.end(), stratum->begin(), stratum->begin() + static_cast<std::ptrdiff_t>(k));
    s.test.insert(s.test.end(), stratum->begin() + static_cast<std::ptrdiff_t>(k), stratum->end());
  }
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  if (s.test.empty()) throw TrainError("validation split left no test images");
  return s;
}

// Standardised (N,3,H,W) tensor of the given images at the model input size.
inline Tensor<float> load_batch(const data::SceneDataset& ds, const std::vector<std::string>& refs,
                                const ModelConfig& cfg) {
  Tensor<float> out({refs.size(), 3, static_cast<std::size_t>(cfg.input_h), static_cast<std::size_t>(cfg.input_w)});
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto im = data::resize(data::load_image(ds.abs(refs[i])), cfg.input_h, cfg.input_w);
    data::normalize_into(im, cfg.pixel_mean, cfg.pixel_std, out, i);
  }
  return out;
}

inline Tensor<float> gather(const Tensor<float>& t, const std::vector<std::size_t>& idx) {
  Shape s = t.shape();
  const std::size_t per = t.numel() / s[0];
  s[0] = idx.size();
  Tensor<float> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i)
    std::copy_n(t.data() + idx[i] * per, per, out.data() + i * per);
  return out;
}

// Teacher pyramid for a whole image set, computed in chunks.
struct TeacherCache {
  std::vector<Tensor<float>> levels;
  std::size_t size() const { return levels.empty() ? 0 : levels[0].shape()[0]; }

  FeaturePyramid<float> batch(const std::vector<std::size_t>& idx) const {
    FeaturePyramid<float> p;
    for (const auto& l : levels) p.levels.emplace_back(gather(l, idx));
    return p;
  }
};

inline TeacherCache cache_teacher(OmniADModel<float>& model, const Tensor<float>& images, std::size_t chunk = 32) {
  TeacherCache c;
  const std::size_t n = images.shape()[0];
  for (std::size_t start = 0; start < n; start += chunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(n, start + chunk); ++i) idx.push_back(i);
    auto t = model.teacher_forward(Var<float>(gather(images, idx)));
    if (c.levels.empty()) {
      for (const auto& l : t.levels) {
        Shape s = l.shape();
        s[0] = n;
        c.levels.emplace_back(s);
      }
    }
    for (std::size_t l = 0; l < t.levels.size(); ++l) {
      const auto& v = t.levels[l].value();
      std::copy_n(v.data(), v.numel(), c.levels[l].data() + start * (v.numel() / idx.size()));
    }
  }
  return c;
}

// Bilinear resize of a single-channel score map.
inline std::vector<float> resize_map(const std::vector<float>& m, std::size_t h, std::size_t w, std::size_t oh,
                                     std::size_t ow) {
  if (h == oh && w == ow) return m;
  auto up = ops::upsample_bilinear(Var<float>(Tensor<float>({1, 1, h, w}, m)), oh, ow);
  return up.value().vec();
}

// Inference-mode score maps from cached teacher features, at mask resolution.
inline std::vector<std::vector<float>> score_maps(OmniADModel<float>& model, const TeacherCache& cache,
                                                  const std::vector<std::size_t>& idx, std::size_t out_h,
                                                  std::size_t out_w, std::size_t chunk = 16) {
  const auto& cfg = model.config();
  std::vector<std::vector<float>> out;
  for (std::size_t start = 0; start < idx.size(); start += chunk) {
    std::vector<std::size_t> part(idx.begin() + static_cast<std::ptrdiff_t>(start),
                                  idx.begin() + static_cast<std::ptrdiff_t>(std::min(idx.size(), start + chunk)));
    auto f = model.forward_from_teacher(cache.batch(part), false);
    auto maps = anomaly_maps_from_features(f.teacher, f.student, cfg.input_h, cfg.input_w, cfg.smoothing_sigma);
    for (auto& m : maps) out.push_back(resize_map(m.scores, m.height, m.width, out_h, out_w));
  }
  return out;
}

struct QuerySet {
  std::vector<std::string> refs;
  std::vector<data::Mask> masks;
  Tensor<float> images;
};

inline QuerySet load_queries(const data::SceneDataset& ds, const ModelConfig& cfg) {
  QuerySet q;
  for (std::size_t i = 0; i < ds.test_images.size(); ++i) {
    q.refs.push_back(ds.test_images[i].path);
    q.masks.push_back(data::load_binary_mask(ds.abs(ds.test_masks[i])));
  }
  q.images = load_batch(ds, q.refs, cfg);
  return q;
}

inline eval::EvalReport evaluate_indices(OmniADModel<float>& model, const TeacherCache& cache, const QuerySet& q,
                                         const std::vector<std::size_t>& idx,
                                         std::vector<std::vector<float>>* maps_out = nullptr) {
  if (idx.empty()) throw TrainError("nothing to evaluate");
  const auto& m0 = q.masks[idx[0]];
  auto maps = score_maps(model, cache, idx, m0.height, m0.width);
  std::vector<std::vector<std::uint8_t>> truth;
  for (auto i : idx) {
    if (q.masks[i].height != m0.height || q.masks[i].width != m0.width)
      throw TrainError("query masks differ in size");
    truth.push_back(q.masks[i].values);
  }
  auto r = eval::evaluate(maps, truth);
  if (maps_out) *maps_out = std::move(maps);
  return r;
}

// ----- checkpoints -----

inline void save_checkpoint(const fs::path& path, OmniADModel<float>& model, nlohmann::json meta) {
  io::TensorArchive a;
  meta["model_config"] = model.config();
  a.meta = std::move(meta);
  io::add_state(a, model.state());
  io::save_archive(path, a);
}

struct Checkpoint {
  std::unique_ptr<OmniADModel<float>> model;
  nlohmann::json meta;
};

// Rebuilds the model from the stored config and restores every tensor,
// teacher included, so no weights file is needed.
inline Checkpoint load_checkpoint(const fs::path& path) {
  auto a = io::load_archive(path);
  if (!a.meta.contains("model_config")) throw TrainError(path.string() + " carries no model_config");
  auto cfg = a.meta.at("model_config").get<ModelConfig>();
  cfg.backbone_weights.clear();
  Checkpoint c{std::make_unique<OmniADModel<float>>(cfg, a.meta.value("student_seed", std::uint64_t{0})), a.meta};
  auto st = c.model->state();
  io::load_state(st, a);
  return c;
}

// ----- run manifest -----

struct RunManifest {
  RunConfig config;
  std::string config_hash;
  std::string dataset_variant;
  std::vector<double> train_loss, val_f1, epoch_seconds;
  int best_epoch = 0;  // 1-based
  double best_val_f1 = -1;
  std::string checkpoint;
  double wall_clock_seconds = 0;
  std::vector<std::string> validation_refs, test_refs;
  std::size_t train_images = 0, synthesized_images = 0;
  std::size_t trainable_parameters = 0;
  std::string teacher_hash_before, teacher_hash_after;
  eval::EvalReport test_report;
};

inline nlohmann::json to_json(const RunManifest& m) {
  return {{"kind", "train"},
          {"config", to_json(m.config)},
          {"config_hash", m.config_hash},
          {"dataset_variant", m.dataset_variant},
          {"train_loss", m.train_loss},
          {"val_f1", m.val_f1},
          {"epoch_seconds", m.epoch_seconds},
          {"best_epoch", m.best_epoch},
          {"best_val_f1", m.best_val_f1},
          {"checkpoint", m.checkpoint},
          {"wall_clock_seconds", m.wall_clock_seconds},
          {"validation_refs", m.validation_refs},
          {"test_refs", m.test_refs},
          {"train_images", m.train_images},
          {"synthesized_images", m.synthesized_images},
          {"trainable_parameters", m.trainable_parameters},
          {"teacher_hash_before", m.teacher_hash_before},
          {"teacher_hash_after", m.teacher_hash_after},
          {"test_report", eval::to_json(m.test_report)}};
}

inline RunManifest run_manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.config = run_config_from_json(j);
  m.config_hash = j.value("config_hash", "");
  m.dataset_variant = j.value("dataset_variant", "");
  m.train_loss = j.value("train_loss", std::vector<double>{});
  m.val_f1 = j.value("val_f1", std::vector<double>{});
  m.epoch_seconds = j.value("epoch_seconds", std::vector<double>{});
  m.best_epoch = j.value("best_epoch", 0);
  m.best_val_f1 = j.value("best_val_f1", -1.0);
  m.checkpoint = j.value("checkpoint", "");
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  m.validation_refs = j.value("validation_refs", std::vector<std::string>{});
  m.test_refs = j.value("test_refs", std::vector<std::string>{});
  m.train_images = j.value("train_images", std::size_t{0});
  m.synthesized_images = j.value("synthesized_images", std::size_t{0});
  m.trainable_parameters = j.value("trainable_parameters", std::size_t{0});
  m.teacher_hash_before = j.value("teacher_hash_before", "");
  m.teacher_hash_after = j.value("teacher_hash_after", "");
  if (j.contains("test_report")) m.test_report = eval::eval_report_from_json(j.at("test_report"));
  return m;
}

// Index of the best epoch (1-based): strict improvement only, so ties keep
// the earliest.
inline int best_epoch_of(const std::vector<double>& val_f1) {
  int best = 0;
  for (std::size_t i = 0; i < val_f1.size(); ++i)
    if (best == 0 || val_f1[i] > val_f1[static_cast<std::size_t>(best - 1)]) best = static_cast<int>(i) + 1;
  return best;
}

struct EpochLog {
  int epoch;
  double train_loss;
  double val_f1;
  double seconds;
  bool improved;
};

inline void check_disjoint(const std::vector<std::string>& a, const std::vector<std::string>& b, const char* what) {
  std::set<std::string> s(a.begin(), a.end());
  for (const auto& x : b)
    if (s.count(x)) throw TrainError(std::string("leakage: ") + x + " is in both " + what);
}

// Trains the student against the frozen teacher; writes best.ckpt and
// manifest.json under out_dir and returns the manifest.
inline RunManifest train_model(const RunConfig& rc, const std::function<void(const EpochLog&)>& on_epoch = {}) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  rc.train.validate();
  rc.model.validate();
  if (rc.model.backbone != BackboneKind::tiny_random && rc.model.backbone_weights.empty())
    throw TrainError(to_string(rc.model.backbone) + " backbone needs backbone_weights");
  const auto& tc = rc.train;

  const auto ds = data::load_dataset(rc.dataset, tc.augmentation);
  if (ds.train_images.empty()) throw TrainError("empty training set in " + rc.dataset);
  if (ds.test_images.empty()) throw TrainError("no query images in " + rc.dataset);

  RunManifest man;
  man.config = rc;
  man.config_hash = config_hash(rc);
  man.dataset_variant = data::to_string(tc.augmentation);
  man.train_images = ds.train_images.size();
  man.synthesized_images = ds.synthesized_count();

  OmniADModel<float> model(rc.model, tc.seed);
  nn::StateList<float> teacher_state;
  model.collect_teacher(teacher_state);
  man.teacher_hash_before = state_hash(teacher_state);
  man.trainable_parameters = model.trainable_state().parameter_count();

  const auto queries = load_queries(ds, rc.model);
  std::vector<std::size_t> counts;
  for (const auto& m : queries.masks) counts.push_back(m.count());
  const auto split = stratified_split(counts, tc.val_fraction, tc.split_seed);
  for (auto i : split.val) man.validation_refs.push_back(queries.refs[i]);
  for (auto i : split.test) man.test_refs.push_back(queries.refs[i]);
  check_disjoint(man.validation_refs, man.test_refs, "validation and test");

  std::vector<std::string> train_refs;
  for (const auto& r : ds.train_images) train_refs.push_back(r.path);
  check_disjoint(train_refs, queries.refs, "training and query sets");
  const auto train_cache = cache_teacher(model, load_batch(ds, train_refs, rc.model));
  const auto query_cache = cache_teacher(model, queries.images);

  auto trainable = model.trainable_state();
  std::vector<Var<float>> params;
  for (auto& p : trainable.params) params.push_back(p.var);
  Adam<float> opt(params, {tc.lr, tc.betas[0], tc.betas[1], 1e-8});

  const fs::path out_dir(rc.out_dir);
  fs::create_directories(out_dir);
  const fs::path ckpt = out_dir / "best.ckpt";
  man.checkpoint = ckpt.string();

  std::mt19937_64 shuffle_rng(tc.seed * 0x9E3779B97F4A7C15ULL + 0x51);
  std::vector<std::size_t> order(train_refs.size());
  for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    const auto e0 = clock::now();
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(
                                                       std::min(order.size(), start + static_cast<std::size_t>(tc.batch_size))));
      opt.zero_grad();
      auto f = model.forward_from_teacher(train_cache.batch(idx), true);
      auto loss = distillation_loss(f.teacher, f.student);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv))
        throw TrainError("non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                         std::to_string(start) + " (lr " + std::to_string(tc.lr) + ")");
      backward(loss);
      opt.step();
      loss_sum += lv * static_cast<double>(idx.size());
    }
    man.train_loss.push_back(loss_sum / static_cast<double>(order.size()));
    const double vf1 = evaluate_indices(model, query_cache, queries, split.val).pixel_f1;
    man.val_f1.push_back(vf1);
    const bool improved = best_epoch_of(man.val_f1) == epoch;
    if (improved) {
      man.best_epoch = epoch;
      man.best_val_f1 = vf1;
      save_checkpoint(ckpt, model,
                      {{"epoch", epoch}, {"val_f1", vf1}, {"student_seed", tc.seed}, {"train_config", to_json(tc)},
                       {"dataset", rc.dataset}, {"validation_refs", man.validation_refs}, {"test_refs", man.test_refs},
                       {"config_hash", man.config_hash}});
    }
    man.epoch_seconds.push_back(std::chrono::duration<double>(clock::now() - e0).count());
    if (on_epoch) on_epoch({epoch, man.train_loss.back(), vf1, man.epoch_seconds.back(), improved});
  }

  man.teacher_hash_after = state_hash(teacher_state);
  if (man.teacher_hash_after != man.teacher_hash_before) throw TrainError("teacher weights changed during training");

  auto best = load_checkpoint(ckpt);
  const auto best_cache = cache_teacher(*best.model, queries.images);
  man.test_report = evaluate_indices(*best.model, best_cache, queries, split.test);
  man.wall_clock_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  io::write_json(out_dir / "manifest.json", to_json(man));
  return man;
}

}  // namespace scenead::train
