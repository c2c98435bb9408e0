#pragma once

// Central finite differences, used as the independent oracle for every
// analytic gradient in the test suites.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "scenead/core/autograd.hpp"

namespace scenead::testing {

struct GradCheckResult {
  double max_rel_error = 0;
  double max_abs_error = 0;
  std::size_t checked = 0;
  std::vector<std::pair<double, double>> entries;  // analytic, numeric
};

// Relative error with a floor on the denominator so that entries whose true
// gradient is numerically zero are judged on absolute error instead.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Compares the analytic gradient already stored in `leaf` against central
// differences of `loss_fn` for the given flat indices.
inline GradCheckResult check_entries(const Var<double>& leaf, const std::vector<double>& analytic,
                                     const std::vector<std::size_t>& indices,
                                     const std::function<double()>& loss_fn, double eps = 1e-6) {
  GradCheckResult r;
  auto& value = const_cast<Var<double>&>(leaf).mutable_value();
  for (std::size_t idx : indices) {
    const double orig = value[idx];
    value[idx] = orig + eps;
    const double lp = loss_fn();
    value[idx] = orig - eps;
    const double lm = loss_fn();
    value[idx] = orig;
    const double numeric = (lp - lm) / (2 * eps);
    const double a = analytic.empty() ? 0.0 : analytic[idx];
    r.max_rel_error = std::max(r.max_rel_error, rel_error(a, numeric));
    r.max_abs_error = std::max(r.max_abs_error, std::abs(a - numeric));
    r.entries.emplace_back(a, numeric);
    ++r.checked;
  }
  return r;
}

// Per-entry verdict |a - n| <= abs_tol + rel_tol * max(|a|, |n|). abs_tol
// covers central-difference roundoff (about eps_machine * |loss| / h).
// worst_rel is taken over entries large enough that abs_tol is negligible.
struct EntryTally {
  std::size_t checked = 0, resolved = 0, bad = 0;
  double worst_rel = 0, worst_abs = 0;
};

inline void tally(EntryTally& t, const GradCheckResult& r, double rel_tol, double abs_tol) {
  for (auto [a, n] : r.entries) {
    const double mag = std::max(std::abs(a), std::abs(n));
    const double err = std::abs(a - n);
    ++t.checked;
    t.bad += err > abs_tol + rel_tol * mag;
    t.worst_abs = std::max(t.worst_abs, err);
    if (mag * rel_tol >= 10 * abs_tol) {
      ++t.resolved;
      t.worst_rel = std::max(t.worst_rel, err / mag);
    }
  }
}

inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  if (n <= k) return all;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

inline Tensor<double> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  Tensor<double> t(std::move(s));
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.vec()) v = d(rng);
  return t;
}

}  // namespace scenead::testing
