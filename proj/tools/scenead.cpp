#include <CLI11.hpp>
#include <iostream>

#include "scenead/cli/commands.hpp"

using namespace scenead::cli;

namespace {

// json object of the flags the user actually set
struct Flags {
  json o = json::object();
  template <typename T>
  void put(const char* key, const std::optional<T>& v) {
    if (v) o[key] = *v;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenead: scene anomaly detection by reverse distillation with student attention"};
  app.require_subcommand(1);
  app.fallthrough();
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "per-epoch progress on stderr");

  std::string sub;
  Flags f;
  std::optional<std::uint64_t> seed;
  std::optional<int> k, start, n_train, n_query, size, epochs, locations, images;
  std::optional<double> tau, gate, noise_rot, noise_trans;
  std::string out, dataset, config, variant = "both", renderer = "procedural", render_dir, localizer = "gt",
                                    localizer_poses, checkpoint, heatmaps, split = "test", json_out, poses, manifest,
                                    out_dir, prefix = "train/good";
  std::vector<std::string> grids;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> methods, variants;

  auto* fx = app.add_subcommand("fixture", "render a procedural scene dataset");
  fx->add_option("--out", out, "dataset root to create")->required();
  fx->add_option("--seed", seed);
  fx->add_option("--n-train", n_train, "captured training views");
  fx->add_option("--n-query", n_query, "query views, each with one anomaly");
  fx->add_option("--size", size, "image side in pixels");
  fx->add_option("--spec", config, "JSON with fixture fields");

  auto* aug = app.add_subcommand("augment", "synthesize INV and/or QANV training views");
  aug->add_option("--dataset", dataset)->required();
  aug->add_option("--variant", variant)->check(CLI::IsMember({"inv", "qanv", "both"}));
  aug->add_option("--k", k, "renders per trajectory segment");
  aug->add_option("--start", start, "trajectory start index");
  aug->add_option("--renderer", renderer)->check(CLI::IsMember({"procedural", "external"}));
  aug->add_option("--render-dir", render_dir, "external renders (poses.json + PNGs)");
  aug->add_option("--localizer", localizer)->check(CLI::IsMember({"gt", "noisy", "external"}));
  aug->add_option("--localizer-poses", localizer_poses, "poses.json from an external localizer");
  aug->add_option("--noise-rotation-deg", noise_rot);
  aug->add_option("--noise-translation-frac", noise_trans);
  aug->add_option("--seed", seed);

  auto* ps = app.add_subcommand("poses", "camera pose utilities");
  auto* dn = ps->add_subcommand("densify", "greedy trajectory plus interpolated poses");
  ps->require_subcommand(1);
  dn->add_option("--poses", poses)->required();
  dn->add_option("--out", out)->required();
  dn->add_option("--k", k);
  dn->add_option("--start", start);
  dn->add_option("--prefix", prefix, "pose names to use");

  auto* tr = app.add_subcommand("train", "train one model");
  tr->add_option("--config", config, "run config or run manifest")->required();
  tr->add_option("--seed", seed);
  tr->add_option("--out-dir", out_dir);
  tr->add_option("--epochs", epochs);

  auto* gr = app.add_subcommand("grid", "method x augmentation ablation");
  gr->add_option("--dataset", dataset)->required();
  gr->add_option("--out", out, "grid report JSON")->required();
  gr->add_option("--config", config, "JSON with grid fields (model, train, seeds, ...)");
  gr->add_option("--seeds", seeds)->delimiter(',');
  gr->add_option("--methods", methods)->delimiter(',');
  gr->add_option("--variants", variants)->delimiter(',');
  gr->add_option("--epochs", epochs);

  auto* ev = app.add_subcommand("eval", "score a checkpoint on query images");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--dataset", dataset, "defaults to the training dataset");
  ev->add_option("--out", out)->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"test", "val", "all"}));
  ev->add_option("--heatmaps", heatmaps, "directory for score and segmentation PNGs");

  auto* er = app.add_subcommand("erf", "effective receptive fields with and without self-attention");
  er->add_option("--checkpoint", checkpoint)->required();
  er->add_option("--out", out)->required();
  er->add_option("--dataset", dataset);
  er->add_option("--locations", locations);
  er->add_option("--images", images);
  er->add_option("--tau", tau);
  er->add_option("--gate", gate, "override every attention gate");
  er->add_option("--heatmaps", heatmaps);
  er->add_option("--seed", seed);

  auto* rp = app.add_subcommand("report", "F1/AUROC tables from grid reports");
  rp->add_option("--grid", grids)->required();
  rp->add_option("--out", out, "markdown")->required();
  rp->add_option("--json", json_out);

  auto* rr = app.add_subcommand("rerun", "replay a manifest and compare its metrics");
  rr->add_option("--manifest", manifest)->required();
  rr->add_option("--out", out, "where the replay writes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? ok : usage;
  }

  try {
    if (*rr) {
      auto r = rerun(manifest, out);
      for (const auto& m : r.mismatches)
        std::cerr << "mismatch " << m.key << ": expected " << m.expected << ", got " << m.actual << '\n';
      if (!r.mismatches.empty()) return invariant;
      std::cout << "reproduced " << metrics_of(r.manifest).size() << " metrics\n";
      return ok;
    }

    f.put("seed", seed);
    json result;
    if (*fx) {
      sub = "fixture";
      f.o["out"] = out;
      json spec = config.empty() ? json::object() : scenead::io::read_json(config);
      if (n_train) spec["n_train"] = *n_train;
      if (n_query) spec["n_query"] = *n_query;
      if (size) spec["image_size"] = *size;
      f.o["fixture"] = spec;
    } else if (*aug) {
      sub = "augment";
      f.o.update({{"dataset", dataset}, {"variant", variant}, {"renderer", renderer}, {"render_dir", render_dir},
                  {"localizer", localizer}, {"localizer_poses", localizer_poses}});
      f.put("k", k);
      f.put("start", start);
      f.put("noise_rotation_deg", noise_rot);
      f.put("noise_translation_frac", noise_trans);
    } else if (*ps) {
      sub = "poses densify";
      f.o.update({{"poses", poses}, {"out", out}, {"prefix", prefix}});
      f.put("k", k);
      f.put("start", start);
    } else if (*tr) {
      sub = "train";
      f.o.update({{"config", config}, {"out_dir", out_dir}, {"verbose", verbose}});
      f.put("epochs", epochs);
    } else if (*gr) {
      sub = "grid";
      json g = config.empty() ? json::object() : scenead::io::read_json(config);
      if (!seeds.empty()) g["seeds"] = seeds;
      else if (seed) g["seeds"] = {*seed};
      if (!methods.empty()) g["methods"] = methods;
      if (!variants.empty()) g["variants"] = variants;
      if (epochs) g["train"]["max_epochs"] = *epochs;
      f.o.update({{"dataset", dataset}, {"out", out}, {"grid", g}, {"verbose", verbose}});
    } else if (*ev) {
      sub = "eval";
      f.o.update({{"checkpoint", checkpoint}, {"dataset", dataset}, {"out", out}, {"split", split},
                  {"heatmaps", heatmaps}});
    } else if (*er) {
      sub = "erf";
      f.o.update({{"checkpoint", checkpoint}, {"dataset", dataset}, {"out", out}, {"heatmaps", heatmaps}});
      f.put("locations", locations);
      f.put("images", images);
      f.put("tau", tau);
      f.put("gate", gate);
    } else if (*rp) {
      sub = "report";
      f.o.update({{"grids", grids}, {"out", out}, {"json", json_out}});
    }
    result = run_command(sub, f.o);
    if (sub == "grid")
      for (const auto& c : result.at("cells"))
        if (c.contains("error")) {
          std::cerr << "scenead grid: some cells failed; see " << out << '\n';
          return failure;
        }
    if (sub == "report") std::cout << scenead::io::read_text(out);
    else if (verbose) std::cout << result.dump(2) << '\n';
    return ok;
  } catch (const CommandError& e) {
    std::cerr << "scenead " << sub << ": " << e.what() << '\n';
    return e.code();
  } catch (const std::exception& e) {
    std::cerr << "scenead " << sub << ": " << e.what() << '\n';
    return failure;
  }
}
