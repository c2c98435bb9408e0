#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scenead/synth/augment.hpp"
#include "scenead/synth/fixture.hpp"
#include "scenead/synth/handles.hpp"
#include "scenead/train/trainer.hpp"

namespace scenead::train {

enum class Method { omniad, omniad_wo_r, omniad_wo_a, rd };

inline const std::vector<Method>& all_methods() {
  static const std::vector<Method> m{Method::omniad, Method::omniad_wo_r, Method::omniad_wo_a, Method::rd};
  return m;
}

inline const std::vector<data::Augmentation>& all_variants() {
  static const std::vector<data::Augmentation> v{data::Augmentation::none, data::Augmentation::qanv,
                                                 data::Augmentation::inv, data::Augmentation::both};
  return v;
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::omniad: return "omniad";
    case Method::omniad_wo_r: return "omniad_wo_r";
    case Method::omniad_wo_a: return "omniad_wo_a";
    case Method::rd: return "rd";
  }
  return "?";
}

inline Method method_from_string(const std::string& s) {
  for (auto m : all_methods())
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

inline std::string display_name(Method m) {
  switch (m) {
    case Method::omniad: return "OmniAD";
    case Method::omniad_wo_r: return "OmniAD w/o R";
    case Method::omniad_wo_a: return "OmniAD w/o A^i";
    case Method::rd: return "RD";
  }
  return "?";
}

inline std::string display_name(data::Augmentation a) {
  switch (a) {
    case data::Augmentation::none: return "No Aug";
    case data::Augmentation::qanv: return "QANV";
    case data::Augmentation::inv: return "INV";
    case data::Augmentation::both: return "Both";
  }
  return "?";
}

inline bool uses_resnext(Method m) { return m == Method::omniad || m == Method::omniad_wo_a; }
inline bool uses_attention(Method m) { return m == Method::omniad || m == Method::omniad_wo_r; }

struct GridConfig {
  std::string dataset;
  std::string out_dir;
  ModelConfig base;
  TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::vector<Method> methods = all_methods();
  std::vector<data::Augmentation> variants = all_variants();
  // tiny_random: grouped convs stand in for the ResNeXt encoder
  int resnext_groups = 4;
  // pretrained: weight archives per backbone
  std::string resnext_weights, rd_weights;
  // build INV/QANV for procedural fixtures when absent
  bool build_missing = true;
  int inv_k = 12;
};

inline nlohmann::json to_json(const GridConfig& g) {
  nlohmann::json methods = nlohmann::json::array(), variants = nlohmann::json::array();
  for (auto m : g.methods) methods.push_back(to_string(m));
  for (auto v : g.variants) variants.push_back(data::to_string(v));
  return {{"dataset", g.dataset},         {"out_dir", g.out_dir},       {"model", g.base},
          {"train", to_json(g.train)},    {"seeds", g.seeds},           {"methods", methods},
          {"variants", variants},         {"resnext_groups", g.resnext_groups},
          {"resnext_weights", g.resnext_weights}, {"rd_weights", g.rd_weights},
          {"build_missing", g.build_missing}, {"inv_k", g.inv_k}};
}

inline GridConfig grid_config_from_json(const nlohmann::json& j) {
  GridConfig g;
  g.dataset = j.at("dataset").get<std::string>();
  g.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("model")) g.base = j.at("model").get<ModelConfig>();
  if (j.contains("train")) g.train = train_config_from_json(j.at("train"));
  g.seeds = j.value("seeds", g.seeds);
  if (j.contains("methods")) {
    g.methods.clear();
    for (const auto& m : j.at("methods")) g.methods.push_back(method_from_string(m.get<std::string>()));
  }
  if (j.contains("variants")) {
    g.variants.clear();
    for (const auto& v : j.at("variants")) g.variants.push_back(data::augmentation_from_string(v.get<std::string>()));
  }
  g.resnext_groups = j.value("resnext_groups", g.resnext_groups);
  g.resnext_weights = j.value("resnext_weights", g.resnext_weights);
  g.rd_weights = j.value("rd_weights", g.rd_weights);
  g.build_missing = j.value("build_missing", g.build_missing);
  g.inv_k = j.value("inv_k", g.inv_k);
  return g;
}

inline ModelConfig method_config(Method m, const GridConfig& g) {
  ModelConfig c = g.base;
  c.use_attention_modules = uses_attention(m);
  if (c.backbone == BackboneKind::tiny_random) {
    c.tiny_groups = uses_resnext(m) ? g.resnext_groups : 1;
  } else {
    c.backbone = uses_resnext(m) ? BackboneKind::resnext_pretrained : BackboneKind::rd_default_pretrained;
    c.backbone_weights = uses_resnext(m) ? g.resnext_weights : g.rd_weights;
  }
  return c;
}

inline RunConfig cell_config(Method m, data::Augmentation v, std::uint64_t seed, const GridConfig& g) {
  RunConfig r;
  r.dataset = g.dataset;
  r.out_dir = (fs::path(g.out_dir) / (to_string(m) + "_" + data::to_string(v) + "_s" + std::to_string(seed))).string();
  r.model = method_config(m, g);
  r.train = g.train;
  r.train.seed = seed;
  r.train.augmentation = v;
  return r;
}

// Renders INV/QANV for a procedural fixture (scene.json present) if the
// requested variants need them and they are missing. Returns what was built.
inline std::vector<std::string> ensure_variants(const fs::path& root, const std::vector<data::Augmentation>& variants,
                                                int inv_k) {
  bool need_inv = false, need_qanv = false;
  for (auto v : variants) {
    need_inv = need_inv || data::uses_inv(v);
    need_qanv = need_qanv || data::uses_qanv(v);
  }
  need_inv = need_inv && data::list_pngs(root, data::layout::train_inv).empty();
  need_qanv = need_qanv && data::list_pngs(root, data::layout::train_qanv).empty();
  std::vector<std::string> built;
  if ((!need_inv && !need_qanv) || !fs::exists(root / "scene.json")) return built;
  synth::ProceduralRenderer renderer(render::scene_from_json(io::read_json(root / "scene.json")));
  if (need_inv) {
    synth::build_inv_augmentation(data::load_dataset(root, data::Augmentation::none), renderer, inv_k);
    built.push_back("inv");
  }
  if (need_qanv) {
    const auto ds = data::load_dataset(root, data::Augmentation::none);
    synth::GroundTruthLocalizer gt(synth::query_truth(ds));
    synth::build_qanv_augmentation(ds, renderer, gt);
    built.push_back("qanv");
  }
  return built;
}

struct GridCell {
  Method method = Method::omniad;
  data::Augmentation variant = data::Augmentation::none;
  std::uint64_t seed = 0;
  std::optional<RunManifest> run;
  std::string error;
  bool ok() const { return run.has_value(); }
};

struct GridReport {
  GridConfig config;
  std::vector<std::string> built_variants;
  std::vector<GridCell> cells;
  double wall_clock_seconds = 0;

  const GridCell* find(Method m, data::Augmentation v, std::uint64_t seed) const {
    for (const auto& c : cells)
      if (c.method == m && c.variant == v && c.seed == seed) return &c;
    return nullptr;
  }
};

inline nlohmann::json to_json(const GridReport& r) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : r.cells) {
    nlohmann::json j = {{"method", to_string(c.method)}, {"variant", data::to_string(c.variant)}, {"seed", c.seed}};
    if (c.run) {
      j["run"] = to_json(*c.run);
    } else {
      j["error"] = c.error;
    }
    cells.push_back(std::move(j));
  }
  return {{"kind", "grid"}, {"config", to_json(r.config)}, {"built_variants", r.built_variants},
          {"cells", cells}, {"wall_clock_seconds", r.wall_clock_seconds}};
}

inline GridReport grid_report_from_json(const nlohmann::json& j) {
  if (j.value("kind", "") != "grid") throw std::invalid_argument("not a grid report");
  GridReport r;
  r.config = grid_config_from_json(j.at("config"));
  r.built_variants = j.value("built_variants", r.built_variants);
  r.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  for (const auto& c : j.at("cells")) {
    GridCell g;
    g.method = method_from_string(c.at("method").get<std::string>());
    g.variant = data::augmentation_from_string(c.at("variant").get<std::string>());
    g.seed = c.at("seed").get<std::uint64_t>();
    if (c.contains("run")) g.run = run_manifest_from_json(c.at("run"));
    g.error = c.value("error", "");
    r.cells.push_back(std::move(g));
  }
  return r;
}

using CellFilter = std::function<bool(Method, data::Augmentation, std::uint64_t)>;
using CellCallback = std::function<void(const GridCell&)>;

// Trains every (method, variant, seed) cell; a failing cell records its error
// and the rest still run. Writes out_dir/grid_report.json.
inline GridReport ablation_grid(const GridConfig& g, const CellFilter& filter = {},
                                const CellCallback& on_cell = {},
                                const std::function<void(const EpochLog&)>& on_epoch = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  GridReport rep;
  rep.config = g;
  if (g.build_missing) rep.built_variants = ensure_variants(g.dataset, g.variants, g.inv_k);
  for (auto seed : g.seeds)
    for (auto m : g.methods)
      for (auto v : g.variants) {
        if (filter && !filter(m, v, seed)) continue;
        GridCell cell{m, v, seed, std::nullopt, ""};
        try {
          cell.run = train_model(cell_config(m, v, seed, g), on_epoch);
        } catch (const std::exception& e) {
          cell.error = e.what();
        }
        if (on_cell) on_cell(cell);
        rep.cells.push_back(std::move(cell));
      }
  rep.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  fs::create_directories(g.out_dir);
  io::write_json(fs::path(g.out_dir) / "grid_report.json", to_json(rep));
  return rep;
}

}  // namespace scenead::train
