#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dynerr/attractor.hpp"

namespace dynerr {

// Per-query local dimension d and inverse persistence theta. Invalid states
// hold NaN in d/theta/gof_p and must be skipped by every aggregate.
struct DynamicalIndices {
  std::vector<double> d;
  std::vector<double> theta;
  std::vector<bool> valid;
  std::vector<std::size_t> n_exceedances;
  std::vector<double> gof_p;
  double q = kDefaultQuantile;

  std::size_t size() const noexcept { return d.size(); }
  std::size_t n_valid() const;
};

struct GofResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 0.0;
  int n_bins_used = 0;
  bool applicable = false;
};

// Maximum-likelihood exponential scale of the exceedances.
double exponential_scale(std::span<const double> u);

// d = 1 / mean(u). Throws InvalidArgument when every exceedance is zero.
double local_dimension(const ExceedanceSet& exc);

// Süveges maximum-likelihood extremal index from inter-exceedance gaps,
// clamped into (0, 1]. A single unbroken cluster returns 1 / len(times).
double inverse_persistence(std::span<const std::size_t> times, double q);
double inverse_persistence(const ExceedanceSet& exc);

// Chi-squared goodness of fit of the exceedances to the fitted exponential:
// ten equiprobable bins, adjacent bins merged until each expects >= 5
// observations, one estimated parameter. `applicable` is false when fewer
// than three bins survive merging.
GofResult gpd_fit_test(std::span<const double> u);
GofResult gpd_fit_test(const ExceedanceSet& exc);

inline constexpr int kGofBins = 10;
inline constexpr double kGofMinExpected = 5.0;

DynamicalIndices compute_indices(const ReferenceAttractor& ref, const TrajectoryDataset& queries,
                                 double q = kDefaultQuantile, std::size_t threads = 0);

}  // namespace dynerr
