#include "dynerr/attractor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dynerr/parallel.hpp"

namespace dynerr {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double diff = a[j] - b[j];
    s += diff * diff;
  }
  return s;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

double neg_log_from_squared(double d2) { return -std::log(std::sqrt(d2)); }

void check_query(const ReferenceAttractor& ref, std::span<const double> query) {
  if (query.size() != ref.dim()) {
    throw InvalidArgument("query has " + std::to_string(query.size()) +
                          " components, reference has " + std::to_string(ref.dim()));
  }
}

// The carried count is the number of exceedances, which is zero here.
InvalidState too_few_finite(std::size_t n_finite) {
  return InvalidState("only " + std::to_string(n_finite) + " finite distances, need " +
                          std::to_string(kMinFiniteDistances),
                      0);
}

InvalidState too_few_exceedances(std::size_t count) {
  return InvalidState("only " + std::to_string(count) + " exceedances, need " +
                          std::to_string(kMinExceedances),
                      count);
}

}  // namespace

ReferenceAttractor::ReferenceAttractor(Matrix states, double dt, bool normalized)
    : states_(std::move(states)), dt_(dt), normalized_(normalized) {
  if (states_.rows() < kMinReferenceSize) {
    throw InvalidArgument("reference attractor needs at least " +
                          std::to_string(kMinReferenceSize) + " states, got " +
                          std::to_string(states_.rows()));
  }
  if (states_.cols() == 0) throw InvalidArgument("reference states have no components");
  for (double v : states_.flat()) {
    if (!std::isfinite(v)) throw InvalidArgument("reference attractor has a non-finite entry");
  }
}

ReferenceAttractor build_reference(const TrajectoryDataset& train, bool normalized) {
  return ReferenceAttractor(train.states(), train.dt(), normalized);
}

void validate_quantile(double q) {
  if (!(q > 0.5 && q < 1.0)) throw InvalidArgument("quantile q must lie in (0.5, 1)");
}

double euclidean_distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

double interpolated_quantile(std::span<const double> sorted, double q) {
  const std::size_t n = sorted.size();
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

std::vector<double> neg_log_distance_series(const ReferenceAttractor& ref,
                                            std::span<const double> query) {
  check_query(ref, query);
  std::vector<double> g(ref.size());
  for (std::size_t t = 0; t < ref.size(); ++t) {
    g[t] = neg_log_from_squared(squared_distance(ref.states().row(t), query));
  }
  return g;
}

ExceedanceSet exceedances(std::span<const double> g, double q, std::size_t query_id) {
  validate_quantile(q);
  std::vector<double> finite;
  finite.reserve(g.size());
  for (double v : g) {
    if (std::isfinite(v)) finite.push_back(v);
  }
  if (finite.size() < kMinFiniteDistances) throw too_few_finite(finite.size());
  std::sort(finite.begin(), finite.end());

  ExceedanceSet out;
  out.query_id = query_id;
  out.q = q;
  out.n_finite = finite.size();
  out.g_q = interpolated_quantile(finite, q);
  for (std::size_t t = 0; t < g.size(); ++t) {
    if (std::isfinite(g[t]) && g[t] > out.g_q) {
      out.u.push_back(g[t] - out.g_q);
      out.times.push_back(t);
    }
  }
  if (out.u.size() < kMinExceedances) throw too_few_exceedances(out.u.size());
  return out;
}

ExceedanceSet query_exceedances(const ReferenceAttractor& ref, std::span<const double> query,
                                double q, std::size_t query_id) {
  validate_quantile(q);
  check_query(ref, query);
  const std::size_t n_ref = ref.size();

  // g is finite exactly when the squared distance is positive and finite.
  std::vector<double> d2(n_ref);
  std::vector<double> finite_d2;
  finite_d2.reserve(n_ref);
  for (std::size_t t = 0; t < n_ref; ++t) {
    d2[t] = squared_distance(ref.states().row(t), query);
    if (d2[t] > 0.0 && d2[t] < kInf) finite_d2.push_back(d2[t]);
  }
  const std::size_t n = finite_d2.size();
  if (n < kMinFiniteDistances) throw too_few_finite(n);

  // Ascending g order statistic k is descending-distance order statistic
  // n - 1 - k, so the two bracketing g values come from a selection on d2.
  const double h = static_cast<double>(n - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  double d2_lo = 0.0;
  double g_q = 0.0;
  if (lo + 1 >= n) {
    d2_lo = *std::min_element(finite_d2.begin(), finite_d2.end());
    g_q = neg_log_from_squared(d2_lo);
  } else {
    const std::size_t pos_hi = n - 2 - lo;  // d2 rank of g order statistic lo + 1
    std::nth_element(finite_d2.begin(), finite_d2.begin() + static_cast<std::ptrdiff_t>(pos_hi),
                     finite_d2.end());
    const double d2_hi = finite_d2[pos_hi];
    d2_lo = *std::min_element(finite_d2.begin() + static_cast<std::ptrdiff_t>(pos_hi) + 1,
                              finite_d2.end());
    const double g_lo = neg_log_from_squared(d2_lo);
    const double g_hi = neg_log_from_squared(d2_hi);
    g_q = g_lo + frac * (g_hi - g_lo);
  }

  ExceedanceSet out;
  out.query_id = query_id;
  out.q = q;
  out.n_finite = n;
  out.g_q = g_q;
  for (std::size_t t = 0; t < n_ref; ++t) {
    // Rows farther than order statistic lo cannot exceed g_q >= g_lo.
    if (!(d2[t] > 0.0 && d2[t] <= d2_lo)) continue;
    const double g = neg_log_from_squared(d2[t]);
    if (g > g_q) {
      out.u.push_back(g - g_q);
      out.times.push_back(t);
    }
  }
  if (out.u.size() < kMinExceedances) throw too_few_exceedances(out.u.size());
  return out;
}

std::vector<ExceedanceOutcome> batch_exceedances(const ReferenceAttractor& ref,
                                                 const TrajectoryDataset& queries, double q,
                                                 std::size_t threads) {
  validate_quantile(q);
  if (queries.n_space() != ref.dim()) {
    throw InvalidArgument("queries have " + std::to_string(queries.n_space()) +
                          " components, reference has " + std::to_string(ref.dim()));
  }
  std::vector<ExceedanceOutcome> out(queries.n_times());
  parallel_for(
      queries.n_times(),
      [&](std::size_t i) {
        try {
          out[i].set = query_exceedances(ref, queries.states().row(i), q, i);
        } catch (const InvalidState& e) {
          out[i].count = e.count();
          out[i].error = e.what();
        }
      },
      threads);
  return out;
}

}  // namespace dynerr
