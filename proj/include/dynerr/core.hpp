#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <tuple>

#include "dynerr/matrix.hpp"

namespace dynerr {

// Time-major trajectory: row i is the flattened state at time
// (start_index + i) * dt. Construction validates every invariant, so a
// TrajectoryDataset in hand is always non-empty, finite, and has dt > 0.
class TrajectoryDataset {
 public:
  TrajectoryDataset(std::string name, double dt, Matrix states,
                    std::uint64_t start_index = 0);

  const std::string& name() const noexcept { return name_; }
  double dt() const noexcept { return dt_; }
  const Matrix& states() const noexcept { return states_; }
  std::uint64_t start_index() const noexcept { return start_index_; }

  std::size_t n_times() const noexcept { return states_.rows(); }
  std::size_t n_space() const noexcept { return states_.cols(); }
  double time_of(std::size_t row) const noexcept {
    return static_cast<double>(start_index_ + row) * dt_;
  }

  // Rows [first, first + count), keeping absolute time via start_index.
  TrajectoryDataset slice(std::size_t first, std::size_t count) const;

 private:
  std::string name_;
  double dt_;
  Matrix states_;
  std::uint64_t start_index_;
};

struct NormStats {
  double mean = 0.0;
  double std = 1.0;
};

struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.15;
  double test_frac = 0.15;
};

enum class FileFormat { kCsv, kBinary };

// Picks the format from the extension: ".csv" is CSV, anything else binary.
FileFormat format_from_path(const std::filesystem::path& path);

TrajectoryDataset load_dataset(const std::filesystem::path& path, FileFormat format);
void save_dataset(const TrajectoryDataset& dataset, const std::filesystem::path& path,
                  FileFormat format);

// Scalar mean and population standard deviation over every entry.
NormStats compute_norm_stats(const TrajectoryDataset& train);
void validate(const NormStats& stats);

TrajectoryDataset zscore(const TrajectoryDataset& dataset, const NormStats& stats);
TrajectoryDataset inverse_zscore(const TrajectoryDataset& dataset, const NormStats& stats);

void validate(const SplitSpec& spec);

struct SplitResult {
  TrajectoryDataset train;
  TrajectoryDataset val;
  TrajectoryDataset test;
};

// Contiguous partition; each split gets floor(frac * N_t) rows and the
// leftover goes to test.
SplitResult split(const TrajectoryDataset& dataset, const SplitSpec& spec = {});

}  // namespace dynerr
