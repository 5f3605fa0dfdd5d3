#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynerr/attractor.hpp"
#include "dynerr/metrics.hpp"

namespace dynerr {

// m input steps, lead n, output length l (1 for direct forecasts).
struct ForecastTask {
  std::size_t m = 3;
  std::size_t n = 1;
  std::size_t l = 1;

  void validate() const;
};

// Maps an [m x N_s] input window to the state n steps past its last row.
// Implementations must be safe to call concurrently.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::vector<double> predict(const Matrix& window, std::size_t n) const = 0;
  virtual std::string name() const = 0;
};

class PersistenceForecaster final : public Forecaster {
 public:
  std::vector<double> predict(const Matrix& window, std::size_t n) const override;
  std::string name() const override { return "persistence"; }
};

// Half-open range of reference rows a query window was taken from.
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
};

// Method of analogues: average the successors of the k reference windows
// closest (Euclidean, flattened) to the query window. Neighbours are
// ordered by (distance, position), so the result is fully determined.
class AnalogForecaster final : public Forecaster {
 public:
  enum class Search { kTree, kBruteForce };

  AnalogForecaster(Matrix reference, std::size_t k, std::size_t m, Search search = Search::kTree);
  AnalogForecaster(const ReferenceAttractor& reference, std::size_t k, std::size_t m,
                   Search search = Search::kTree);
  ~AnalogForecaster() override;
  AnalogForecaster(AnalogForecaster&&) noexcept;

  std::vector<double> predict(const Matrix& window, std::size_t n) const override;
  // Skips candidate windows overlapping `exclude` (train-on-train use).
  std::vector<double> predict(const Matrix& window, std::size_t n,
                              const std::optional<RowRange>& exclude) const;
  std::string name() const override { return "analog"; }

  // Window start positions of the chosen neighbours, nearest first.
  std::vector<std::size_t> neighbours(std::span<const double> window_flat, std::size_t n,
                                      const std::optional<RowRange>& exclude = std::nullopt) const;

  std::size_t k() const noexcept { return k_; }
  std::size_t window() const noexcept { return m_; }
  const Matrix& reference() const noexcept { return reference_; }

 private:
  struct Tree;
  Matrix reference_;
  std::size_t k_;
  std::size_t m_;
  Search search_;
  std::unique_ptr<Tree> tree_;
};

std::vector<double> persistence_forecast(const Matrix& window, std::size_t n);
std::vector<double> analog_forecast(const AnalogForecaster& forecaster, const Matrix& window,
                                    std::size_t n);

// Forecasts from every admissible window of `test` (or `max_pairs` evenly
// spaced ones when non-zero). Pair i's truth is test row start_i + m - 1 + n.
ForecastPair direct_eval(const Forecaster& forecaster, const TrajectoryDataset& test,
                         const ForecastTask& task, std::size_t max_pairs = 0,
                         std::size_t threads = 0);

struct RolloutResult {
  Matrix states;  // one row per completed step
  std::optional<std::size_t> crash_step;  // 1-based step that went non-finite
};

RolloutResult recursive_rollout(const Forecaster& forecaster, const Matrix& init_window,
                                std::size_t steps);

struct EvalTimeResult {
  std::size_t step = 0;
  double lt = 0.0;
  std::size_t survivors = 0;
  double mean_mse = 0.0;
  double std_mse = 0.0;
  std::optional<EvaluationReport> report;
  std::string error;  // why report is missing, if it is
};

struct RolloutStudyConfig {
  std::size_t m = 3;
  std::size_t steps = 1100;
  std::size_t n_starts = 500;
  std::vector<std::size_t> eval_steps;
  double q = kDefaultQuantile;
  std::size_t n_bins = kDefaultBins;
  std::size_t lt_steps = 0;  // 0 leaves the lt column at NaN
};

struct RolloutStudy {
  std::vector<std::size_t> starts;
  std::vector<std::optional<std::size_t>> crash_steps;
  std::vector<EvalTimeResult> times;
};

std::vector<std::size_t> evenly_spaced_starts(std::size_t n_admissible, std::size_t n_starts);

RolloutStudy rollout_study(const Forecaster& forecaster, const TrajectoryDataset& test,
                           const ReferenceAttractor& ref, const RolloutStudyConfig& config,
                           std::size_t threads = 0);

void write_rollout_csv(const RolloutStudy& study, const std::filesystem::path& path);

}  // namespace dynerr
