#pragma once

// Independent reference computations used only by the tests. Nothing here
// calls into the library paths it is used to check.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

namespace oracle {

// Welford single-pass mean and population standard deviation.
inline std::pair<double, double> streaming_mean_std(const std::vector<double>& xs) {
  double mean = 0.0;
  double m2 = 0.0;
  std::size_t n = 0;
  for (double x : xs) {
    ++n;
    const double delta = x - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (x - mean);
  }
  return {mean, std::sqrt(m2 / static_cast<double>(n))};
}

// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
// O(n^3) potentials form).
inline double assignment_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  double total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) total += cost[p[j] - 1][j - 1];
  return total;
}

// Exact optimal transport between uniform empirical measures on a and b.
// Each point is split into lcm/len unit masses; with integer supplies the
// transport polytope has integral vertices, so an assignment on the units
// solves the transport linear program exactly.
inline double transport_lp(const std::vector<double>& a, const std::vector<double>& b) {
  const std::size_t units = std::lcm(a.size(), b.size());
  const std::size_t ra = units / a.size();
  const std::size_t rb = units / b.size();
  std::vector<std::vector<double>> cost(units, std::vector<double>(units));
  for (std::size_t i = 0; i < units; ++i) {
    for (std::size_t j = 0; j < units; ++j) {
      cost[i][j] = std::abs(a[i / ra] - b[j / rb]);
    }
  }
  return assignment_cost(cost) / static_cast<double>(units);
}

}  // namespace oracle
