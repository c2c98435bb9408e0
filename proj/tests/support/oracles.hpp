#pragma once

// Brute-force reference implementations used by the metric tests and the
// acceptance binary. Deliberately quadratic.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <vector>

namespace scenead::testing {

inline double brute_f1(const std::vector<float>& s, const std::vector<std::uint8_t>& t, double thr) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const bool p = s[i] >= thr;
    tp += p && t[i];
    fp += p && !t[i];
    fn += !p && t[i];
  }
  const double prec = tp + fp > 0 ? tp / (tp + fp) : 0;
  const double rec = tp + fn > 0 ? tp / (tp + fn) : 0;
  return prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
}

struct BruteSweep {
  double f1 = -1;
  double threshold = 0;
};

// Every distinct score plus +inf, lowest threshold wins ties.
inline BruteSweep brute_sweep(const std::vector<float>& s, const std::vector<std::uint8_t>& t) {
  std::set<double> cands(s.begin(), s.end());
  cands.insert(std::numeric_limits<double>::infinity());
  BruteSweep best;
  for (double c : cands) {  // ascending
    const double f = brute_f1(s, t, c);
    if (f > best.f1) best = {f, c};
  }
  return best;
}

inline double brute_auroc(const std::vector<float>& s, const std::vector<std::uint8_t>& t) {
  double num = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!t[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (t[j]) continue;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      pairs += 1;
    }
  }
  return num / pairs;
}

// Random scores with deliberate ties (quantized) and a mixed truth vector.
inline void random_instance(std::size_t n, std::mt19937_64& rng, std::vector<float>& s,
                            std::vector<std::uint8_t>& t) {
  std::uniform_int_distribution<int> levels(2, 200);
  const int q = levels(rng);
  std::uniform_int_distribution<int> lv(0, q);
  std::uniform_real_distribution<double> frac(0.02, 0.6);
  std::bernoulli_distribution pos(frac(rng));
  s.resize(n);
  t.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = pos(rng);
    // positives get an upward shift of whole levels so instances are
    // informative and equal scores stay bit-equal
    const int level = lv(rng) + (t[i] ? q / 6 : 0);
    s[i] = static_cast<float>(level) / static_cast<float>(q);
  }
  t[0] = 1;
  t[n - 1] = 0;
}

// Nearest-neighbour chain by exhaustive distance table, ties to lowest index.
inline std::vector<std::size_t> brute_greedy(const std::vector<std::array<double, 3>>& pts,
                                             std::size_t start) {
  const std::size_t n = pts.size();
  std::vector<std::vector<double>> d(n, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (int c = 0; c < 3; ++c) s += (pts[i][c] - pts[j][c]) * (pts[i][c] - pts[j][c]);
      d[i][j] = std::sqrt(s);
    }
  std::vector<std::size_t> order{start};
  std::vector<bool> used(n, false);
  used[start] = true;
  while (order.size() < n) {
    const std::size_t cur = order.back();
    std::vector<std::size_t> cand;
    for (std::size_t j = 0; j < n; ++j)
      if (!used[j]) cand.push_back(j);
    std::size_t best = cand.front();
    for (auto j : cand)
      if (d[cur][j] < d[cur][best]) best = j;
    used[best] = true;
    order.push_back(best);
  }
  return order;
}

}  // namespace scenead::testing
