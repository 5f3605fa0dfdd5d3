#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynerr/core.hpp"
#include "dynerr/indices.hpp"

namespace dynerr {

// Forecast ŷ paired with the truth y at lead n.
struct ForecastPair {
  TrajectoryDataset pred;
  TrajectoryDataset truth;
  std::size_t lead_steps = 1;

  void validate() const;
};

enum class ErrorKind { kMse, kNmse, kMae, kNmae };
enum class IndexKind { kD, kTheta };

const char* to_string(ErrorKind kind);
const char* to_string(IndexKind kind);

// Standard metric over all entries. NMSE divides by sigma_y^2 and NMAE by
// |mu_y|; both come from `norm` when given, otherwise from the truth.
double state_error(const ForecastPair& pair, ErrorKind kind,
                   const std::optional<NormStats>& norm = std::nullopt);

// Mean squared error of each snapshot over its N_s components.
std::vector<double> per_state_squared_error(const ForecastPair& pair);

struct DiError {
  double value = 0.0;
  std::size_t n_used = 0;
  std::size_t n_skipped = 0;
};

// Index error restricted to states valid in both sets. Normalised kinds use
// the variance / |mean| of the true index over those states.
DiError di_error(const DynamicalIndices& pred_idx, const DynamicalIndices& true_idx,
                 ErrorKind kind, IndexKind which);

struct DidSample {
  double did_d = 0.0;
  double did_theta = 0.0;
  double mse_state = 0.0;
};

// Percentages of DID samples per sign quadrant, (d, theta) ordered
// (+,+), (+,-), (-,+), (-,-). A zero difference counts as positive.
struct QuadrantShares {
  double pp = 0.0;
  double pm = 0.0;
  double mp = 0.0;
  double mm = 0.0;
};

std::vector<DidSample> did(const DynamicalIndices& pred_idx, const DynamicalIndices& true_idx,
                           std::span<const double> per_state_err);
QuadrantShares did_quadrants(std::span<const DidSample> samples);

// W1 distance between the equal-weight empirical distributions of a and b.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

struct CombinedWd {
  double wd = 0.0;
  double wd_d = 0.0;
  double wd_theta = 0.0;
};

CombinedWd combined_wd(const DynamicalIndices& pred_idx, const DynamicalIndices& true_idx);

// pred/truth rows are samples, columns the lat-major (N_lat x N_lon) grid.
double lat_weighted_rmse(const Matrix& pred, const Matrix& truth, std::span<const double> lats_deg);

struct BinnedErrorCurve {
  std::size_t n_bins = 0;
  std::vector<double> bin_edges;  // n_bins + 1 rank quantiles in [0, 1]
  std::vector<double> index_lo;   // smallest index value per bin
  std::vector<double> index_hi;   // largest index value per bin
  std::vector<double> mean_error;
  std::vector<std::size_t> count;
};

// Samples with a non-finite index value are skipped.
BinnedErrorCurve quantile_bin_errors(std::span<const double> index_values,
                                     std::span<const double> errors, std::size_t n_bins);

inline constexpr std::size_t kDefaultBins = 10;

struct EvaluationReport {
  double mse = 0.0, nmse = 0.0, mae = 0.0, nmae = 0.0;
  double mse_d = 0.0, mse_theta = 0.0, nmse_d = 0.0, nmse_theta = 0.0;
  double mae_d = 0.0, mae_theta = 0.0, nmae_d = 0.0, nmae_theta = 0.0;
  double wd = 0.0, wd_d = 0.0, wd_theta = 0.0;
  double mean_d_pred = 0.0, mean_theta_pred = 0.0, mean_d_true = 0.0, mean_theta_true = 0.0;
  std::vector<DidSample> did;
  QuadrantShares did_quadrants;
  BinnedErrorCurve curve_d;
  BinnedErrorCurve curve_theta;
  std::size_t n_valid = 0;
  std::size_t n_skipped = 0;
  std::optional<double> lat_rmse;
};

EvaluationReport build_report(const ForecastPair& pair, const DynamicalIndices& pred_idx,
                              const DynamicalIndices& true_idx,
                              const std::optional<NormStats>& norm = std::nullopt,
                              std::size_t n_bins = kDefaultBins);

void to_json(nlohmann::json& j, const BinnedErrorCurve& c);
void from_json(const nlohmann::json& j, BinnedErrorCurve& c);
void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

void write_curve_csv(const BinnedErrorCurve& curve, const std::filesystem::path& path);

}  // namespace dynerr
