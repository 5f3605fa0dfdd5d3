#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynerr/core.hpp"

namespace dynerr {

inline constexpr double kDefaultQuantile = 0.98;
inline constexpr std::size_t kMinReferenceSize = 100;
inline constexpr std::size_t kMinExceedances = 30;
inline constexpr std::size_t kMinFiniteDistances = 100;

// Immutable set of reference states (normally the training split) against
// which neighbourhoods and exceedances are computed.
class ReferenceAttractor {
 public:
  ReferenceAttractor(Matrix states, double dt, bool normalized);

  const Matrix& states() const noexcept { return states_; }
  double dt() const noexcept { return dt_; }
  bool normalized() const noexcept { return normalized_; }
  std::size_t size() const noexcept { return states_.rows(); }
  std::size_t dim() const noexcept { return states_.cols(); }

 private:
  Matrix states_;
  double dt_;
  bool normalized_;
};

ReferenceAttractor build_reference(const TrajectoryDataset& train, bool normalized = false);

// Exceedances of the negative log distance above its q-quantile for one
// query state.
struct ExceedanceSet {
  std::size_t query_id = 0;
  double g_q = 0.0;
  double q = kDefaultQuantile;
  std::vector<double> u;
  std::vector<std::size_t> times;
  std::size_t n_finite = 0;
};

// Plain Euclidean distance with a fixed left-to-right summation order.
double euclidean_distance(std::span<const double> a, std::span<const double> b);

// Sorted-sample quantile with linear interpolation between order statistics
// (h = (n - 1) q). `sorted` must be ascending and non-empty.
double interpolated_quantile(std::span<const double> sorted, double q);

// g_t = -log |ref_t - query| for every reference row; exact matches give +inf.
std::vector<double> neg_log_distance_series(const ReferenceAttractor& ref,
                                            std::span<const double> query);

// Threshold at the q-quantile of the finite entries of g and collect the
// strict exceeders in time order. Throws InvalidState (carrying the count)
// when fewer than kMinFiniteDistances finite values or fewer than
// kMinExceedances exceedances are available.
ExceedanceSet exceedances(std::span<const double> g, double q, std::size_t query_id = 0);

// Same result as exceedances(neg_log_distance_series(ref, query), q) without
// materialising or sorting the full series.
ExceedanceSet query_exceedances(const ReferenceAttractor& ref, std::span<const double> query,
                                double q, std::size_t query_id = 0);

struct ExceedanceOutcome {
  std::optional<ExceedanceSet> set;
  std::size_t count = 0;  // offending count when invalid
  std::string error;

  bool valid() const noexcept { return set.has_value(); }
};

// One outcome per query row, in query order. Invalid states are recorded,
// never thrown. Output is independent of thread count.
std::vector<ExceedanceOutcome> batch_exceedances(const ReferenceAttractor& ref,
                                                 const TrajectoryDataset& queries, double q,
                                                 std::size_t threads = 0);

void validate_quantile(double q);

}  // namespace dynerr
