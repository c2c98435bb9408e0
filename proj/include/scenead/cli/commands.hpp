#pragma once

#include <cstdlib>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "scenead/erf/erf.hpp"
#include "scenead/train/report.hpp"

// Subcommand bodies. Each takes a JSON object of resolved options, writes its
// outputs plus a manifest, and returns the manifest. The manifest stores the
// options under "command" so `rerun` can replay it.
namespace scenead::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode { ok = 0, failure = 1, usage = 2, invariant = 3, awaiting_external = 4 };

class CommandError : public std::runtime_error {
 public:
  CommandError(const std::string& what, int code) : std::runtime_error(what), code_(code) {}
  int code() const { return code_; }

 private:
  int code_;
};

inline std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("SCENEAD_SEED");
  if (!s || !*s) return std::nullopt;
  try {
    return std::stoull(s);
  } catch (const std::exception&) {
    throw CommandError(std::string("SCENEAD_SEED is not an integer: ") + s, usage);
  }
}

// flag, else config value, else SCENEAD_SEED, else fallback
inline std::uint64_t resolve_seed(const json& o, const char* key, std::uint64_t fallback) {
  if (o.contains(key) && !o.at(key).is_null()) return o.at(key).get<std::uint64_t>();
  if (auto e = env_seed()) return *e;
  return fallback;
}

inline json command_record(const std::string& name, const json& options) {
  return {{"subcommand", name}, {"options", options}};
}

inline fs::path required_path(const json& o, const char* key) {
  if (!o.contains(key) || o.at(key).is_null() || o.at(key).get<std::string>().empty())
    throw CommandError(std::string("missing --") + key, usage);
  return o.at(key).get<std::string>();
}

inline io::Image8 gray_image(const std::vector<double>& v, std::size_t h, std::size_t w, double scale) {
  io::Image8 im(static_cast<int>(w), static_cast<int>(h), 1);
  for (std::size_t p = 0; p < v.size(); ++p)
    im.pixels[p] = static_cast<std::uint8_t>(std::lround(std::clamp(v[p] * scale, 0.0, 1.0) * 255.0));
  return im;
}

// ----- fixture -----

inline json cmd_fixture(const json& o) {
  const fs::path out = required_path(o, "out");
  synth::FixtureSpec f = synth::fixture_spec_from_json(o.value("fixture", json::object()));
  f.seed = resolve_seed(o, "seed", f.seed);
  if (fs::exists(out / data::layout::manifest)) throw CommandError(out.string() + " already holds a dataset", failure);
  auto r = synth::build_fixture(out, f);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  json options = {{"out", out.string()}, {"seed", f.seed}, {"fixture", synth::to_json(f)}};
  json m = {{"kind", "fixture"},
            {"command", command_record("fixture", options)},
            {"counts", data::count_files(out)},
            {"anomaly_pixel_stats", data::to_json(r.stats)},
            {"warnings", r.warnings}};
  io::write_json(out / "fixture.manifest.json", m);
  return m;
}

// ----- augment -----

inline std::unique_ptr<synth::LocalizerHandle> make_localizer(const json& o, const data::SceneDataset& ds) {
  const auto kind = o.at("localizer").get<std::string>();
  if (kind == "gt") return std::make_unique<synth::GroundTruthLocalizer>(synth::query_truth(ds));
  if (kind == "noisy") {
    double diameter = 1.0;
    if (fs::exists(ds.root / "scene.json"))
      diameter = synth::scene_diameter(render::scene_from_json(io::read_json(ds.root / "scene.json")));
    return std::make_unique<synth::NoisyLocalizer>(synth::query_truth(ds), diameter, o.at("seed").get<std::uint64_t>(),
                                                   o.at("noise_rotation_deg").get<double>(),
                                                   o.at("noise_translation_frac").get<double>());
  }
  if (kind == "external") return std::make_unique<synth::ExternalLocalizer>(required_path(o, "localizer_poses"));
  throw CommandError("unknown localizer '" + kind + "'", usage);
}

// External renders arrive out of band: list what is missing, write it as a
// request file next to the renders and stop.
inline void check_external(synth::ExternalRenderer& r, const data::SceneDataset& ds,
                           const std::vector<synth::SynthesizedView>& views, const fs::path& dir) {
  geometry::PoseFile req;
  req.intrinsics = ds.intrinsics;
  for (const auto& v : views) {
    try {
      r.render(v.pose, synth::detail::intrinsics_of(ds, v.pose), v.path);
    } catch (const synth::ExternalRenderMissing&) {
      req.poses[v.path] = v.pose;
    }
  }
  if (req.poses.empty()) return;
  io::write_json(dir / "requests.json", geometry::to_json(req));
  throw CommandError(std::to_string(req.poses.size()) + " renders missing; requests written to " +
                         (dir / "requests.json").string(),
                     awaiting_external);
}

inline json cmd_augment(const json& in) {
  const fs::path root = required_path(in, "dataset");
  json o = {{"dataset", root.string()},
            {"variant", in.value("variant", "both")},
            {"k", in.value("k", 12)},
            {"start", in.value("start", 0)},
            {"renderer", in.value("renderer", "procedural")},
            {"render_dir", in.value("render_dir", "")},
            {"localizer", in.value("localizer", "gt")},
            {"localizer_poses", in.value("localizer_poses", "")},
            {"noise_rotation_deg", in.value("noise_rotation_deg", 1.0)},
            {"noise_translation_frac", in.value("noise_translation_frac", 0.01)}};
  o["seed"] = resolve_seed(in, "seed", 0);
  const auto variant = data::augmentation_from_string(o["variant"].get<std::string>());
  if (variant == data::Augmentation::none) throw CommandError("augment needs --variant inv, qanv or both", usage);

  std::unique_ptr<synth::RendererHandle> renderer;
  synth::ExternalRenderer* external = nullptr;
  if (o["renderer"] == "procedural") {
    if (!fs::exists(root / "scene.json"))
      throw CommandError("procedural renderer needs scene.json in " + root.string(), failure);
    renderer = std::make_unique<synth::ProceduralRenderer>(render::scene_from_json(io::read_json(root / "scene.json")));
  } else if (o["renderer"] == "external") {
    auto e = std::make_unique<synth::ExternalRenderer>(required_path(o, "render_dir"));
    external = e.get();
    renderer = std::move(e);
  } else {
    throw CommandError("unknown renderer '" + o["renderer"].get<std::string>() + "'", usage);
  }

  const int k = o["k"].get<int>();
  const auto start = o["start"].get<std::size_t>();
  json result = json::object();
  if (data::uses_inv(variant)) {
    const auto ds = data::load_dataset(root, data::Augmentation::none);
    if (external) check_external(*external, ds, synth::build_inv_augmentation(ds, *renderer, k, start, false).views,
                                 o["render_dir"].get<std::string>());
    auto r = synth::build_inv_augmentation(ds, *renderer, k, start);
    result["inv"] = {{"renders", r.views.size()}, {"provenance", r.provenance}};
  }
  if (data::uses_qanv(variant)) {
    const auto ds = data::load_dataset(root, data::Augmentation::none);
    auto loc = make_localizer(o, ds);
    if (external) check_external(*external, ds, synth::build_qanv_augmentation(ds, *renderer, *loc, false).views,
                                 o["render_dir"].get<std::string>());
    auto r = synth::build_qanv_augmentation(ds, *renderer, *loc);
    result["qanv"] = {{"renders", r.views.size()}, {"failures", r.failures}, {"provenance", r.provenance}};
  }
  json m = {{"kind", "augment"}, {"command", command_record("augment", o)}, {"result", result}};
  io::write_json(root / ("augment_" + o["variant"].get<std::string>() + ".manifest.json"), m);
  return m;
}

// ----- poses densify -----

inline json cmd_poses_densify(const json& in) {
  const fs::path src = required_path(in, "poses"), out = required_path(in, "out");
  json o = {{"poses", src.string()}, {"out", out.string()},
            {"k", in.value("k", 12)}, {"start", in.value("start", 0)},
            {"prefix", in.value("prefix", std::string(data::layout::train_good))}};
  const auto pf = geometry::pose_file_from_json(io::read_json(src));
  const auto prefix = o["prefix"].get<std::string>() + "/";
  std::vector<geometry::CameraPose> poses;
  json names = json::array();
  for (const auto& [name, p] : pf.poses)
    if (name.rfind(prefix, 0) == 0) {
      poses.push_back(p);
      names.push_back(name);
    }
  if (poses.empty()) throw CommandError("no poses under " + prefix + " in " + src.string(), failure);
  const auto traj = geometry::build_greedy_trajectory(poses, o["start"].get<std::size_t>());
  const auto dense = geometry::densify_trajectory(poses, traj, o["k"].get<int>());
  geometry::PoseFile res;
  res.intrinsics = pf.intrinsics;
  for (std::size_t i = 0; i < dense.size(); ++i) res.poses[synth::detail::numbered("inv", i)] = dense[i];
  json order = json::array();
  for (auto t : traj) order.push_back(names[t]);
  auto body = geometry::to_json(res);
  body["trajectory"] = order;
  io::write_json(out, body);
  json m = {{"kind", "poses"}, {"command", command_record("poses densify", o)},
            {"count", dense.size()}, {"trajectory", order}};
  io::write_json(fs::path(out.string() + ".manifest.json"), m);
  return m;
}

// ----- train -----

inline json cmd_train(const json& in) {
  json cfg = in.contains("config_json") ? in.at("config_json") : io::read_json(required_path(in, "config"));
  if (cfg.contains("config") && cfg.contains("kind")) cfg = cfg.at("config");  // a run manifest
  const bool has_seed = cfg.contains("train") && cfg.at("train").contains("seed");
  auto rc = train::run_config_from_json(cfg);
  if (in.contains("seed") && !in.at("seed").is_null()) rc.train.seed = in.at("seed").get<std::uint64_t>();
  else if (!has_seed) rc.train.seed = resolve_seed(json::object(), "seed", rc.train.seed);
  if (in.contains("out_dir") && !in.at("out_dir").get<std::string>().empty()) rc.out_dir = in.at("out_dir");
  if (in.contains("epochs") && !in.at("epochs").is_null()) rc.train.max_epochs = in.at("epochs");
  if (rc.out_dir.empty()) throw CommandError("train: no out_dir in config or flags", usage);
  const bool verbose = in.value("verbose", false);
  auto man = train::train_model(rc, [&](const train::EpochLog& e) {
    if (verbose)
      std::cerr << "epoch " << e.epoch << " loss " << e.train_loss << " val_f1 " << e.val_f1
                << (e.improved ? " *" : "") << '\n';
  });
  json m = train::to_json(man);
  m["command"] = command_record("train", {{"config_json", train::to_json(rc)}});
  io::write_json(fs::path(rc.out_dir) / "manifest.json", m);
  return m;
}

// ----- grid -----

inline json cmd_grid(const json& in) {
  const fs::path root = required_path(in, "dataset"), out = required_path(in, "out");
  json gj = in.value("grid", json::object());
  gj["dataset"] = root.string();
  gj["out_dir"] = (out.parent_path() / (out.stem().string() + "_runs")).string();
  auto g = train::grid_config_from_json(gj);
  if (!gj.contains("seeds")) g.seeds = {resolve_seed(json::object(), "seed", 0)};
  const bool verbose = in.value("verbose", false);
  auto rep = train::ablation_grid(g, {}, [&](const train::GridCell& c) {
    std::cerr << train::to_string(c.method) << " / " << data::to_string(c.variant) << " / seed " << c.seed << ": "
              << (c.ok() ? "F1 " + std::to_string(c.run->test_report.pixel_f1) : "error: " + c.error) << '\n';
  }, [&](const train::EpochLog& e) {
    if (verbose) std::cerr << "  epoch " << e.epoch << " loss " << e.train_loss << " val_f1 " << e.val_f1 << '\n';
  });
  json m = train::to_json(rep);
  m["command"] = command_record("grid", {{"dataset", root.string()}, {"out", out.string()}, {"grid", train::to_json(g)}});
  io::write_json(out, m);
  return m;
}

// ----- eval -----

inline json cmd_eval(const json& in) {
  const fs::path ckpt = required_path(in, "checkpoint"), out = required_path(in, "out");
  auto ck = train::load_checkpoint(ckpt);
  std::string dataset = in.value("dataset", "");
  if (dataset.empty()) dataset = ck.meta.value("dataset", "");
  if (dataset.empty()) throw CommandError("eval: no --dataset and none recorded in the checkpoint", usage);
  json o = {{"checkpoint", ckpt.string()}, {"dataset", dataset}, {"out", out.string()},
            {"split", in.value("split", "test")}, {"heatmaps", in.value("heatmaps", "")}};
  const auto split = o["split"].get<std::string>();

  const auto ds = data::load_dataset(dataset, data::Augmentation::none);
  const auto q = train::load_queries(ds, ck.model->config());
  std::vector<std::string> wanted;
  if (split == "test" || split == "val") {
    const char* key = split == "test" ? "test_refs" : "validation_refs";
    if (!ck.meta.contains(key)) throw CommandError("checkpoint records no " + std::string(key), failure);
    wanted = ck.meta.at(key).get<std::vector<std::string>>();
  } else if (split != "all") {
    throw CommandError("unknown split '" + split + "'", usage);
  }
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < q.refs.size(); ++i)
    if (split == "all" || std::find(wanted.begin(), wanted.end(), q.refs[i]) != wanted.end()) idx.push_back(i);
  if (split != "all" && idx.size() != wanted.size())
    throw CommandError("dataset lacks some of the checkpoint's " + split + " images", failure);

  const auto cache = train::cache_teacher(*ck.model, q.images);
  std::vector<std::vector<float>> maps;
  const auto rep = train::evaluate_indices(*ck.model, cache, q, idx, &maps);
  json refs = json::array();
  for (auto i : idx) refs.push_back(q.refs[i]);

  if (const std::string hm = o["heatmaps"]; !hm.empty()) {
    float peak = 0;
    for (const auto& m : maps)
      for (float v : m) peak = std::max(peak, v);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto& mask = q.masks[idx[k]];
      std::vector<double> heat(maps[k].begin(), maps[k].end()), seg(heat.size());
      for (std::size_t p = 0; p < heat.size(); ++p) seg[p] = maps[k][p] >= rep.optimal_threshold;
      const auto stem = fs::path(q.refs[idx[k]]).stem().string();
      io::write_png(fs::path(hm) / (stem + "_heat.png"), gray_image(heat, mask.height, mask.width, peak > 0 ? 1.0 / peak : 0));
      io::write_png(fs::path(hm) / (stem + "_seg.png"), gray_image(seg, mask.height, mask.width, 1.0));
    }
  }
  json m = {{"kind", "eval"},
            {"command", command_record("eval", o)},
            {"report", eval::to_json(rep)},
            {"imbalance", eval::to_json(eval::imbalance_demo(rep))},
            {"refs", refs}};
  io::write_json(out, m);
  return m;
}

// ----- erf -----

inline json cmd_erf(const json& in) {
  const fs::path ckpt = required_path(in, "checkpoint"), out = required_path(in, "out");
  auto ck = train::load_checkpoint(ckpt);
  auto& model = *ck.model;
  const auto& cfg = model.config();
  std::string dataset = in.value("dataset", "");
  if (dataset.empty()) dataset = ck.meta.value("dataset", "");
  json o = {{"checkpoint", ckpt.string()}, {"dataset", dataset}, {"out", out.string()},
            {"locations", in.value("locations", 16)}, {"images", in.value("images", 4)},
            {"tau", in.value("tau", 0.025)}, {"heatmaps", in.value("heatmaps", "")},
            {"gate", in.contains("gate") ? in.at("gate") : json()}};
  o["seed"] = resolve_seed(in, "seed", 0);
  const auto seed = o["seed"].get<std::uint64_t>();
  const auto n_loc = o["locations"].get<std::size_t>(), n_img = o["images"].get<std::size_t>();
  const double tau = o["tau"];
  if (!o["gate"].is_null()) model.set_attention_gates(o["gate"].get<float>());

  // probe images: the first query images, or noise without a dataset
  std::vector<Tensor<float>> images;
  const std::size_t hw = static_cast<std::size_t>(cfg.input_h);
  if (!dataset.empty()) {
    const auto ds = data::load_dataset(dataset, data::Augmentation::none);
    std::vector<std::string> refs;
    for (std::size_t i = 0; i < std::min(n_img, ds.test_images.size()); ++i) refs.push_back(ds.test_images[i].path);
    const auto batch = train::load_batch(ds, refs, cfg);
    const std::size_t n = 3 * hw * hw;
    for (std::size_t i = 0; i < refs.size(); ++i)
      images.emplace_back(Tensor<float>({1, 3, hw, hw}, std::vector<float>(batch.data() + i * n, batch.data() + (i + 1) * n)));
  } else {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> nd(0, 1);
    for (std::size_t i = 0; i < n_img; ++i) {
      Tensor<float> t({1, 3, hw, hw});
      for (auto& v : t.vec()) v = nd(rng);
      images.push_back(std::move(t));
    }
  }
  if (images.empty()) throw CommandError("erf: no probe images", failure);

  json levels = json::array();
  for (int level = 0; level < 3; ++level) {
    const std::size_t g = hw >> (2 + level);
    const auto locs = erf::random_locations(n_loc, g, g, seed + static_cast<std::uint64_t>(level));
    auto cmp = erf::compare_erf(model, model, images, locs, level, tau);
    // conv-only path against its analytic box
    model.set_self_attention_enabled(false);
    const auto plain = erf::compute_erf(model, images[0], locs, level, tau);
    model.set_self_attention_enabled(true);
    std::size_t inside = 0;
    for (const auto& e : plain) inside += erf::support_within(e, erf::receptive_box(cfg, level, e.location));
    auto j = erf::to_json(cmp);
    j["level"] = level;
    j["mid_gray"] = erf::to_json(erf::compare_erf(model, model, std::vector<Tensor<float>>{erf::mid_gray<float>(cfg)}, locs, level, tau));
    j["conv_only_within_box"] = inside;
    levels.push_back(j);

    if (const std::string hm = o["heatmaps"]; !hm.empty()) {
      const auto with = erf::compute_erf(model, images[0], {locs[0]}, level, tau)[0];
      const auto pre = "level" + std::to_string(level);
      io::write_png(fs::path(hm) / (pre + "_with.png"), gray_image(with.magnitude, with.height, with.width, 1.0));
      io::write_png(fs::path(hm) / (pre + "_without.png"),
                    gray_image(plain[0].magnitude, plain[0].height, plain[0].width, 1.0));
    }
  }
  json m = {{"kind", "erf"}, {"command", command_record("erf", o)}, {"levels", levels}};
  io::write_json(out, m);
  return m;
}

// ----- report -----

inline json cmd_report(const json& in) {
  const fs::path out = required_path(in, "out");
  const auto paths = in.at("grids").get<std::vector<std::string>>();
  if (paths.empty()) throw CommandError("report needs at least one --grid", usage);
  json o = {{"grids", paths}, {"out", out.string()}, {"json", in.value("json", "")}};
  std::vector<train::GridReport> grids;
  for (const auto& p : paths) grids.push_back(train::grid_report_from_json(io::read_json(p)));
  const auto rep = train::build_report(grids);
  io::write_text(out, train::render_markdown(rep));
  if (const std::string js = o["json"]; !js.empty()) io::write_json(js, train::to_json(rep));
  json m = {{"kind", "report"}, {"command", command_record("report", o)}, {"tables", train::to_json(rep)}};
  io::write_json(fs::path(out.string() + ".manifest.json"), m);
  return m;
}

// ----- dispatch and replay -----

inline json run_command(const std::string& name, const json& options) {
  if (name == "fixture") return cmd_fixture(options);
  if (name == "augment") return cmd_augment(options);
  if (name == "poses densify") return cmd_poses_densify(options);
  if (name == "train") return cmd_train(options);
  if (name == "grid") return cmd_grid(options);
  if (name == "eval") return cmd_eval(options);
  if (name == "erf") return cmd_erf(options);
  if (name == "report") return cmd_report(options);
  throw CommandError("unknown subcommand '" + name + "'", usage);
}

// Numbers a rerun must reproduce, by manifest kind.
inline std::vector<std::pair<std::string, double>> metrics_of(const json& m) {
  std::vector<std::pair<std::string, double>> out;
  const auto kind = m.value("kind", "");
  auto add = [&](const std::string& k, const json& v) {
    if (v.is_number()) out.emplace_back(k, v.get<double>());
  };
  if (kind == "fixture") {
    for (const auto& [k, v] : m.at("anomaly_pixel_stats").items()) add(k, v);
  } else if (kind == "augment") {
    for (const auto& [k, v] : m.at("result").items()) {
      add(k + ".renders", v.at("renders"));
      if (v.contains("failures")) add(k + ".failures", v.at("failures"));
    }
  } else if (kind == "poses") {
    add("count", m.at("count"));
  } else if (kind == "train") {
    add("test.pixel_f1", m.at("test_report").at("pixel_f1"));
    add("test.pixel_auroc", m.at("test_report").at("pixel_auroc"));
    add("best_val_f1", m.at("best_val_f1"));
    add("best_epoch", m.at("best_epoch"));
    const auto& l = m.at("train_loss");
    for (std::size_t i = 0; i < l.size(); ++i) add("train_loss." + std::to_string(i), l[i]);
  } else if (kind == "grid") {
    for (const auto& c : m.at("cells"))
      if (c.contains("run")) {
        const auto name = c.at("method").get<std::string>() + "/" + c.at("variant").get<std::string>() + "/" +
                          std::to_string(c.at("seed").get<std::uint64_t>());
        add(name + ".pixel_f1", c.at("run").at("test_report").at("pixel_f1"));
        add(name + ".pixel_auroc", c.at("run").at("test_report").at("pixel_auroc"));
      }
  } else if (kind == "eval") {
    add("pixel_f1", m.at("report").at("pixel_f1"));
    add("pixel_auroc", m.at("report").at("pixel_auroc"));
  } else if (kind == "erf") {
    for (const auto& l : m.at("levels")) {
      const auto p = "level" + std::to_string(l.at("level").get<int>());
      add(p + ".mean_area_with", l.at("mean_area_with"));
      add(p + ".mean_area_without", l.at("mean_area_without"));
    }
  } else if (kind == "report") {
    for (const auto& [method, row] : m.at("tables").at("mean_f1").at("rows").items())
      for (const auto& [variant, v] : row.items()) add(method + "/" + variant, v);
  } else {
    throw CommandError("manifest has unknown kind '" + kind + "'", failure);
  }
  return out;
}

struct Mismatch {
  std::string key;
  double expected, actual;
};

inline std::vector<Mismatch> compare_metrics(const json& expected, const json& actual, double rtol = 1e-6) {
  const auto a = metrics_of(expected), b = metrics_of(actual);
  std::vector<Mismatch> bad;
  std::map<std::string, double> got(b.begin(), b.end());
  for (const auto& [k, v] : a) {
    auto it = got.find(k);
    if (it == got.end()) {
      bad.push_back({k, v, NAN});
      continue;
    }
    const double tol = rtol * std::max(std::abs(v), std::abs(it->second));
    if (!(std::abs(v - it->second) <= tol)) bad.push_back({k, v, it->second});
  }
  if (a.size() != b.size() && bad.empty()) bad.push_back({"metric count", double(a.size()), double(b.size())});
  return bad;
}

// Where a replay writes instead of the original output.
inline json redirect(const std::string& name, json o, const fs::path& out) {
  if (name == "train") {
    o["out_dir"] = out.string();
  } else if (name == "augment") {
    if (!out.empty()) o["dataset"] = out.string();
  } else {
    o["out"] = out.string();
  }
  return o;
}

inline fs::path default_rerun_target(const std::string& name, const json& o) {
  auto sibling = [](const fs::path& p) {
    return p.parent_path() / (p.stem().string() + ".rerun" + p.extension().string());
  };
  if (name == "train") return fs::path(o.at("config_json").at("out_dir").get<std::string>() + ".rerun");
  if (name == "augment") return {};  // same dataset, rebuilt in place
  if (name == "fixture") return fs::path(o.at("out").get<std::string>() + ".rerun");
  return sibling(o.at("out").get<std::string>());
}

struct RerunResult {
  json manifest;
  std::vector<Mismatch> mismatches;
};

inline RerunResult rerun(const fs::path& manifest_path, const fs::path& out = {}) {
  const auto original = io::read_json(manifest_path);
  if (!original.contains("command")) throw CommandError(manifest_path.string() + " records no command", failure);
  const auto name = original.at("command").at("subcommand").get<std::string>();
  const auto& o = original.at("command").at("options");
  const fs::path target = out.empty() ? default_rerun_target(name, o) : out;
  auto m = run_command(name, redirect(name, o, target));
  return {m, compare_metrics(original, m)};
}

}  // namespace scenead::cli
