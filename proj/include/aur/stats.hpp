#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "aur/design.hpp"

namespace aur {

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

inline double stddev_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

struct RankTest {
  double u = 0.0;        // Mann-Whitney U of the first sample
  double z = 0.0;
  double p_value = 1.0;  // one-sided, H1: first sample stochastically smaller
  bool exact = false;
};

/// One-sided Mann-Whitney test of H1: x tends to be smaller than y.
/// Exact null distribution for small tie-free samples, otherwise the normal
/// approximation with tie and continuity corrections.
inline RankTest mann_whitney_less(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || y.empty()) throw InvalidInput("mann_whitney_less: empty sample");
  const std::size_t n1 = x.size();
  const std::size_t n2 = y.size();
  std::vector<std::pair<double, int>> all;
  for (double v : x) all.emplace_back(v, 0);
  for (double v : y) all.emplace_back(v, 1);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  const std::size_t n = all.size();
  std::vector<double> rank(n);
  double tie_term = 0.0;
  bool ties = false;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && all[j + 1].first == all[i].first) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[k] = r;
    const double t = static_cast<double>(j - i + 1);
    if (t > 1) ties = true;
    tie_term += t * t * t - t;
    i = j + 1;
  }
  double r1 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (all[i].second == 0) r1 += rank[i];
  }
  RankTest res;
  const double dn1 = static_cast<double>(n1);
  const double dn2 = static_cast<double>(n2);
  res.u = r1 - dn1 * (dn1 + 1.0) / 2.0;

  if (!ties && n1 <= 20 && n2 <= 20) {
    // count[m][k][u]: ways to choose k of the first m ranks with U = u.
    const std::size_t umax = n1 * n2;
    std::vector<std::vector<double>> prev(n1 + 1, std::vector<double>(umax + 1, 0.0));
    prev[0][0] = 1.0;
    for (std::size_t m = 1; m <= n; ++m) {
      std::vector<std::vector<double>> cur = prev;  // rank m goes to y
      for (std::size_t k = 1; k <= std::min(m, n1); ++k) {
        // Rank m assigned to x contributes (m - k) smaller y values.
        const std::size_t add = m - k;
        if (add > n2) continue;
        for (std::size_t u = add; u <= umax; ++u) cur[k][u] += prev[k - 1][u - add];
      }
      prev = std::move(cur);
    }
    double total = 0.0, below = 0.0;
    const auto uobs = static_cast<std::size_t>(std::llround(res.u));
    for (std::size_t u = 0; u <= umax; ++u) {
      total += prev[n1][u];
      if (u <= uobs) below += prev[n1][u];
    }
    res.p_value = below / total;
    res.exact = true;
    return res;
  }
  const double mu = dn1 * dn2 / 2.0;
  const double nn = dn1 + dn2;
  const double var = dn1 * dn2 / 12.0 * ((nn + 1.0) - tie_term / (nn * (nn - 1.0)));
  if (var <= 0.0) {
    res.p_value = 1.0;
    return res;
  }
  res.z = (res.u - mu + 0.5) / std::sqrt(var);
  res.p_value = normal_cdf(res.z);
  return res;
}

}  // namespace aur
