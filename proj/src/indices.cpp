#include "dynerr/indices.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <boost/math/special_functions/gamma.hpp>

#include "dynerr/parallel.hpp"

namespace dynerr {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}  // namespace

std::size_t DynamicalIndices::n_valid() const {
  return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true));
}

double exponential_scale(std::span<const double> u) {
  if (u.empty()) throw InvalidArgument("no exceedances to fit");
  double sum = 0.0;
  for (double v : u) sum += v;
  return sum / static_cast<double>(u.size());
}

double local_dimension(const ExceedanceSet& exc) {
  const double sigma = exponential_scale(exc.u);
  if (!(sigma > 0.0)) throw InvalidArgument("degenerate exceedances: all u are zero");
  return 1.0 / sigma;
}

double inverse_persistence(std::span<const std::size_t> times, double q) {
  if (times.size() < 2) throw InvalidArgument("inverse persistence needs at least 2 exceedances");
  const double p = 1.0 - q;
  const double n_gaps = static_cast<double>(times.size() - 1);
  double sum_s = 0.0;
  double n_clusters = 0.0;
  for (std::size_t i = 0; i + 1 < times.size(); ++i) {
    const double s = static_cast<double>(times[i + 1] - times[i]) - 1.0;
    sum_s += s;
    if (s > 0.0) n_clusters += 1.0;
  }
  const double a = p * sum_s;
  double theta = 0.0;
  if (a == 0.0) {
    theta = 1.0 / static_cast<double>(times.size());
  } else {
    const double b = a + n_gaps + n_clusters;
    theta = (b - std::sqrt(b * b - 8.0 * n_clusters * a)) / (2.0 * a);
  }
  if (!(theta > 0.0)) theta = std::numeric_limits<double>::min();
  return std::min(theta, 1.0);
}

double inverse_persistence(const ExceedanceSet& exc) { return inverse_persistence(exc.times, exc.q); }

GofResult gpd_fit_test(std::span<const double> u) {
  GofResult res;
  if (u.empty()) return res;
  const double sigma = exponential_scale(u);
  if (!(sigma > 0.0)) return res;

  // Upper edges of the equiprobable bins under Exp(sigma); the last is +inf.
  std::vector<double> edges(kGofBins - 1);
  for (int k = 1; k < kGofBins; ++k) {
    edges[k - 1] = -sigma * std::log(1.0 - static_cast<double>(k) / kGofBins);
  }
  std::vector<double> observed(kGofBins, 0.0);
  for (double v : u) {
    const auto bin = std::upper_bound(edges.begin(), edges.end(), v) - edges.begin();
    observed[static_cast<std::size_t>(bin)] += 1.0;
  }
  const double expected_each = static_cast<double>(u.size()) / kGofBins;

  // Greedy left-to-right merge; a short tail folds into the last group.
  std::vector<double> obs_groups;
  std::vector<double> exp_groups;
  double obs_acc = 0.0;
  double exp_acc = 0.0;
  for (int k = 0; k < kGofBins; ++k) {
    obs_acc += observed[k];
    exp_acc += expected_each;
    if (exp_acc >= kGofMinExpected) {
      obs_groups.push_back(obs_acc);
      exp_groups.push_back(exp_acc);
      obs_acc = exp_acc = 0.0;
    }
  }
  if (exp_acc > 0.0) {
    if (obs_groups.empty()) {
      obs_groups.push_back(obs_acc);
      exp_groups.push_back(exp_acc);
    } else {
      obs_groups.back() += obs_acc;
      exp_groups.back() += exp_acc;
    }
  }

  res.n_bins_used = static_cast<int>(obs_groups.size());
  if (res.n_bins_used < 3) {
    res.p_value = kNaN;
    res.dof = std::max(res.n_bins_used - 2, 0);
    return res;
  }
  double stat = 0.0;
  for (std::size_t i = 0; i < obs_groups.size(); ++i) {
    const double diff = obs_groups[i] - exp_groups[i];
    stat += diff * diff / exp_groups[i];
  }
  res.statistic = stat;
  res.dof = res.n_bins_used - 2;
  res.p_value = boost::math::gamma_q(0.5 * res.dof, 0.5 * stat);
  res.applicable = true;
  return res;
}

GofResult gpd_fit_test(const ExceedanceSet& exc) { return gpd_fit_test(exc.u); }

DynamicalIndices compute_indices(const ReferenceAttractor& ref, const TrajectoryDataset& queries,
                                 double q, std::size_t threads) {
  validate_quantile(q);
  if (queries.n_space() != ref.dim()) {
    throw InvalidArgument("queries have " + std::to_string(queries.n_space()) +
                          " components, reference has " + std::to_string(ref.dim()));
  }
  const std::size_t n = queries.n_times();
  DynamicalIndices out;
  out.q = q;
  out.d.assign(n, kNaN);
  out.theta.assign(n, kNaN);
  out.gof_p.assign(n, kNaN);
  out.n_exceedances.assign(n, 0);
  // std::vector<bool> packs bits, so workers write through a byte buffer.
  std::vector<unsigned char> valid(n, 0);

  parallel_for(
      n,
      [&](std::size_t i) {
        try {
          const ExceedanceSet exc = query_exceedances(ref, queries.states().row(i), q, i);
          out.n_exceedances[i] = exc.u.size();
          const double d = local_dimension(exc);
          const double theta = inverse_persistence(exc);
          out.d[i] = d;
          out.theta[i] = theta;
          out.gof_p[i] = gpd_fit_test(exc).p_value;
          valid[i] = std::isfinite(d) && d > 0.0 ? 1 : 0;
        } catch (const InvalidState& e) {
          out.n_exceedances[i] = e.count();
        } catch (const InvalidArgument&) {
          // degenerate fit; stays invalid
        }
        if (!valid[i]) {
          out.d[i] = kNaN;
          out.theta[i] = kNaN;
        }
      },
      threads);
  out.valid.assign(valid.begin(), valid.end());
  return out;
}

}  // namespace dynerr
