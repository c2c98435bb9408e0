#pragma once

#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scenead/train/grid.hpp"

namespace scenead::train {

// Method x variant table; empty cells are gaps.
struct Table {
  std::string title;
  std::vector<Method> rows;
  std::vector<data::Augmentation> cols;
  std::vector<std::vector<std::optional<double>>> values;

  std::optional<double> at(Method m, data::Augmentation v) const {
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t c = 0; c < cols.size(); ++c)
        if (rows[r] == m && cols[c] == v) return values[r][c];
    return std::nullopt;
  }
};

// Relative gain of a over b in percent; undefined for b == 0.
inline std::optional<double> improvement_percent(double a, double b) {
  if (b == 0) return std::nullopt;
  return (a - b) / b * 100.0;
}

enum class Metric { f1, auroc };

// Seed mean of the test metric per cell.
inline Table metric_table(const GridReport& g, Metric metric, const std::string& title) {
  Table t{title, all_methods(), all_variants(), {}};
  for (auto m : t.rows) {
    std::vector<std::optional<double>> row;
    for (auto v : t.cols) {
      double sum = 0;
      int n = 0;
      for (const auto& c : g.cells)
        if (c.method == m && c.variant == v && c.ok()) {
          sum += metric == Metric::f1 ? c.run->test_report.pixel_f1 : c.run->test_report.pixel_auroc;
          ++n;
        }
      row.push_back(n ? std::optional<double>(sum / n) : std::nullopt);
    }
    t.values.push_back(std::move(row));
  }
  return t;
}

// Cellwise mean over tables; a cell is a gap if any table lacks it.
inline Table mean_table(const std::vector<Table>& tables, const std::string& title) {
  if (tables.empty()) throw std::invalid_argument("mean of no tables");
  Table t = tables.front();
  t.title = title;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    for (std::size_t c = 0; c < t.cols.size(); ++c) {
      double sum = 0;
      bool gap = false;
      for (const auto& x : tables) {
        gap = gap || !x.values[r][c];
        if (x.values[r][c]) sum += *x.values[r][c];
      }
      t.values[r][c] = gap ? std::nullopt : std::optional<double>(sum / static_cast<double>(tables.size()));
    }
  return t;
}

// Every cell relative to the RD / No Aug baseline.
inline Table improvement_table(const Table& mean, const std::string& title) {
  Table t = mean;
  t.title = title;
  const auto base = mean.at(Method::rd, data::Augmentation::none);
  for (auto& row : t.values)
    for (auto& v : row) v = (v && base) ? improvement_percent(*v, *base) : std::nullopt;
  return t;
}

struct AblationReport {
  std::vector<std::string> datasets;
  std::vector<Table> f1, auroc;
  Table mean_f1, improvement;
};

inline AblationReport build_report(const std::vector<GridReport>& grids) {
  if (grids.empty()) throw std::invalid_argument("report needs at least one grid");
  AblationReport r;
  for (const auto& g : grids) {
    const std::string name = fs::path(g.config.dataset).filename().string();
    r.datasets.push_back(name);
    r.f1.push_back(metric_table(g, Metric::f1, "Pixel F1: " + name));
    r.auroc.push_back(metric_table(g, Metric::auroc, "Pixel AUROC: " + name));
  }
  r.mean_f1 = mean_table(r.f1, "Mean pixel F1 across datasets");
  r.improvement = improvement_table(r.mean_f1, "Improvement over RD / No Aug (%)");
  return r;
}

inline std::string format_value(const std::optional<double>& v, bool percent) {
  if (!v) return "-";
  char b[32];
  std::snprintf(b, sizeof b, percent ? "%.2f%%" : "%.3f", *v);
  return b;
}

inline std::string render_markdown(const Table& t, bool percent = false) {
  std::ostringstream s;
  s << "### " << t.title << "\n\n| Method |";
  for (auto v : t.cols) s << ' ' << display_name(v) << " |";
  s << "\n|---|";
  for (std::size_t i = 0; i < t.cols.size(); ++i) s << "---|";
  s << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    s << "| " << display_name(t.rows[r]) << " |";
    for (const auto& v : t.values[r]) s << ' ' << format_value(v, percent) << " |";
    s << '\n';
  }
  return s.str();
}

inline std::string render_markdown(const AblationReport& r) {
  std::string out;
  for (const auto& t : r.f1) out += render_markdown(t) + "\n";
  for (const auto& t : r.auroc) out += render_markdown(t) + "\n";
  out += render_markdown(r.mean_f1) + "\n";
  out += render_markdown(r.improvement, true);
  return out;
}

inline nlohmann::json to_json(const Table& t) {
  nlohmann::json rows = nlohmann::json::object();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t c = 0; c < t.cols.size(); ++c)
      row[data::to_string(t.cols[c])] = t.values[r][c] ? nlohmann::json(*t.values[r][c]) : nlohmann::json();
    rows[to_string(t.rows[r])] = row;
  }
  return {{"title", t.title}, {"rows", rows}};
}

inline nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json f1 = nlohmann::json::array(), au = nlohmann::json::array();
  for (const auto& t : r.f1) f1.push_back(to_json(t));
  for (const auto& t : r.auroc) au.push_back(to_json(t));
  return {{"datasets", r.datasets}, {"f1", f1}, {"auroc", au},
          {"mean_f1", to_json(r.mean_f1)}, {"improvement_percent", to_json(r.improvement)}};
}

}  // namespace scenead::train
