#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "dynerr/core.hpp"
#include "dynerr/generators.hpp"
#include "oracles.hpp"

namespace dynerr {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("dynerr_core_" + std::to_string(std::random_device{}()));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.flat().data(), b.flat().data(), a.flat().size_bytes()) == 0;
}

TrajectoryDataset small_lorenz(std::size_t steps = 2000) {
  LorenzParams p;
  p.n_steps = steps;
  p.transient_discard = 100;
  return simulate_lorenz(p);
}

TEST(Dataset, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(TrajectoryDataset("x", 0.1, Matrix(0, 3)), InvalidArgument);
  EXPECT_THROW(TrajectoryDataset("x", 0.0, Matrix(2, 3)), InvalidArgument);
  Matrix m(2, 2, 1.0);
  m(1, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(TrajectoryDataset("x", 0.1, m), InvalidArgument);
}

TEST(Dataset, RowTimeIncludesStartIndex) {
  TrajectoryDataset ds("x", 0.5, Matrix(3, 1, 1.0), 4);
  EXPECT_DOUBLE_EQ(ds.time_of(0), 2.0);
  EXPECT_DOUBLE_EQ(ds.time_of(2), 3.0);
}

TEST(DatasetIo, CsvThreeByThree) {
  TempDir dir;
  const auto path = dir / "three.csv";
  {
    std::ofstream out(path);
    out << "# dynerr-csv v1 nt=3 ns=3 dt=0.01\n"
        << "1,1,1\n"
        << "1.0120,1.2599,0.9840\n"
        << "1.0480,1.5240,0.9730\n";
  }
  const auto ds = load_dataset(path, FileFormat::kCsv);
  EXPECT_EQ(ds.n_times(), 3u);
  EXPECT_EQ(ds.n_space(), 3u);
  EXPECT_DOUBLE_EQ(ds.dt(), 0.01);
  EXPECT_DOUBLE_EQ(ds.states()(1, 1), 1.2599);
}

TEST(DatasetIo, CsvNanNamesTheCell) {
  TempDir dir;
  const auto path = dir / "nan.csv";
  {
    std::ofstream out(path);
    out << "# dynerr-csv v1 nt=2 ns=2 dt=1\n1,2\n3,NaN\n";
  }
  try {
    load_dataset(path, FileFormat::kCsv);
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1, column 1"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, CsvRaggedAndBadHeader) {
  TempDir dir;
  {
    std::ofstream out(dir / "ragged.csv");
    out << "# dynerr-csv v1 nt=2 ns=2 dt=1\n1,2\n3\n";
  }
  EXPECT_THROW(load_dataset(dir / "ragged.csv", FileFormat::kCsv), IoError);
  {
    std::ofstream out(dir / "header.csv");
    out << "x,y\n1,2\n";
  }
  EXPECT_THROW(load_dataset(dir / "header.csv", FileFormat::kCsv), IoError);
  EXPECT_THROW(load_dataset(dir / "missing.csv", FileFormat::kCsv), IoError);
}

TEST(DatasetIo, BinaryRoundTripIsBitExactIncludingSubnormals) {
  TempDir dir;
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> bits;
  Matrix m(50, 4);
  for (double& v : m.flat()) {
    // Random finite bit patterns cover subnormals and extreme exponents.
    do {
      v = std::bit_cast<double>(bits(rng));
    } while (!std::isfinite(v));
  }
  m(0, 0) = std::numeric_limits<double>::denorm_min();
  m(0, 1) = -0.0;
  const TrajectoryDataset ds("rt", 0.25, m, 17);
  save_dataset(ds, dir / "rt.dytr", FileFormat::kBinary);
  const auto back = load_dataset(dir / "rt.dytr", FileFormat::kBinary);
  EXPECT_TRUE(bit_equal(back.states(), ds.states()));
  EXPECT_EQ(back.start_index(), 17u);
  EXPECT_EQ(std::bit_cast<std::uint64_t>(back.dt()), std::bit_cast<std::uint64_t>(0.25));
}

TEST(DatasetIo, BinaryLayoutMatchesFormat) {
  TempDir dir;
  const TrajectoryDataset ds("b", 0.5, Matrix(2, 1, std::vector<double>{1.0, 2.0}), 3);
  save_dataset(ds, dir / "b.dytr", FileFormat::kBinary);
  EXPECT_EQ(fs::file_size(dir / "b.dytr"), 4u + 4u + 8u + 8u + 8u + 8u + 2u * 8u);
  std::ifstream in(dir / "b.dytr", std::ios::binary);
  char magic[4];
  in.read(magic, 4);
  EXPECT_EQ(std::string(magic, 4), "DYTR");
}

TEST(DatasetIo, CsvRoundTripOfLorenz) {
  TempDir dir;
  const auto ds = small_lorenz();
  save_dataset(ds, dir / "l.csv", FileFormat::kCsv);
  const auto back = load_dataset(dir / "l.csv", FileFormat::kCsv);
  ASSERT_EQ(back.n_times(), ds.n_times());
  for (std::size_t k = 0; k < ds.states().size(); ++k) {
    EXPECT_NEAR(back.states().flat()[k], ds.states().flat()[k], 1e-15 * std::abs(ds.states().flat()[k]) + 1e-300);
  }
  EXPECT_EQ(back.start_index(), ds.start_index());
}

TEST(DatasetIo, KsHeaderCarriesDt) {
  TempDir dir;
  KsParams p;
  p.n_steps_internal = 600;
  p.transient_discard = 100;
  const auto ks = simulate_ks(p, 42);
  save_dataset(ks, dir / "ks.csv", FileFormat::kCsv);
  std::ifstream in(dir / "ks.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("dt=0.25"), std::string::npos) << header;
  EXPECT_EQ(header.rfind("# dynerr-csv v1 nt=", 0), 0u);
}

TEST(NormStats, TwoPointAndConstant) {
  const TrajectoryDataset two("t", 1.0, Matrix(2, 1, std::vector<double>{0.0, 2.0}));
  const auto s = compute_norm_stats(two);
  EXPECT_DOUBLE_EQ(s.mean, 1.0);
  EXPECT_DOUBLE_EQ(s.std, 1.0);
  EXPECT_THROW(compute_norm_stats(TrajectoryDataset("c", 1.0, Matrix(4, 3, 5.0))), InvalidArgument);
}

TEST(NormStats, MatchesStreamingOracleOnLorenz) {
  const auto parts = split(small_lorenz(20000));
  const auto s = compute_norm_stats(parts.train);
  const auto [mean, sd] = oracle::streaming_mean_std(parts.train.states().data());
  EXPECT_NEAR(s.mean, mean, 1e-12);
  EXPECT_NEAR(s.std, sd, 1e-12);
}

TEST(ZScore, MeanMapsToZeroAndInverts) {
  const auto parts = split(small_lorenz(20000));
  const auto stats = compute_norm_stats(parts.train);
  const TrajectoryDataset at_mean("m", 1.0, Matrix(1, 1, stats.mean));
  EXPECT_EQ(zscore(at_mean, stats).states()(0, 0), 0.0);

  const auto z = zscore(parts.train, stats);
  const auto zs = compute_norm_stats(z);
  EXPECT_NEAR(zs.mean, 0.0, 1e-10);
  EXPECT_NEAR(zs.std, 1.0, 1e-10);

  const auto back = inverse_zscore(zscore(parts.test, stats), stats);
  for (std::size_t k = 0; k < back.states().size(); ++k) {
    EXPECT_NEAR(back.states().flat()[k], parts.test.states().flat()[k], 1e-12);
  }
  EXPECT_THROW(zscore(parts.test, NormStats{0.0, 0.0}), InvalidArgument);
}

TEST(Split, DefaultFractionsAndFloorRule) {
  const TrajectoryDataset hundred("h", 1.0, Matrix(100, 1, 1.0));
  auto p = split(hundred);
  EXPECT_EQ(p.train.n_times(), 70u);
  EXPECT_EQ(p.val.n_times(), 15u);
  EXPECT_EQ(p.test.n_times(), 15u);

  const TrajectoryDataset ten("t", 1.0, Matrix(10, 1, 1.0));
  p = split(ten);
  EXPECT_EQ(p.train.n_times(), 7u);
  EXPECT_EQ(p.val.n_times(), 1u);
  EXPECT_EQ(p.test.n_times(), 2u);

  EXPECT_THROW(split(hundred, SplitSpec{0.5, 0.3, 0.3}), InvalidArgument);
  EXPECT_THROW(split(TrajectoryDataset("s", 1.0, Matrix(2, 1, 1.0))), InvalidArgument);
}

TEST(Split, IsAnOrderedPartitionPreservingTime) {
  for (std::size_t n : {7u, 11u, 97u, 1000u, 1234u}) {
    Matrix m(n, 2);
    for (std::size_t i = 0; i < n; ++i) {
      m(i, 0) = static_cast<double>(i);
      m(i, 1) = -static_cast<double>(i);
    }
    const TrajectoryDataset ds("p", 0.1, m, 5);
    const auto parts = split(ds);
    Matrix joined(0, 2);
    std::vector<double> times;
    for (const auto* part : {&parts.train, &parts.val, &parts.test}) {
      for (std::size_t i = 0; i < part->n_times(); ++i) {
        joined.append_row(part->states().row(i));
        times.push_back(static_cast<double>(part->start_index() + i));
      }
    }
    EXPECT_TRUE(bit_equal(joined, m)) << n;
    for (std::size_t i = 1; i < times.size(); ++i) EXPECT_LT(times[i - 1], times[i]);
    EXPECT_EQ(parts.test.start_index() + parts.test.n_times(), 5 + n);
  }
}

}  // namespace
}  // namespace dynerr
