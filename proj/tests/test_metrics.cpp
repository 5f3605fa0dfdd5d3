#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "dynerr/metrics.hpp"
#include "oracles.hpp"

namespace dynerr {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

TrajectoryDataset ds(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return TrajectoryDataset("m", 0.1, Matrix(rows, cols, std::move(values)));
}

Matrix noise(std::size_t rows, std::size_t cols, std::uint64_t seed, double mean = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(mean, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = gauss(rng);
  return m;
}

DynamicalIndices make_indices(std::vector<double> d, std::vector<double> theta) {
  DynamicalIndices idx;
  idx.d = std::move(d);
  idx.theta = std::move(theta);
  for (std::size_t i = 0; i < idx.d.size(); ++i) {
    const bool ok = std::isfinite(idx.d[i]) && std::isfinite(idx.theta[i]);
    idx.valid.push_back(ok);
    idx.n_exceedances.push_back(ok ? 40 : 5);
    idx.gof_p.push_back(ok ? 0.5 : kNaN);
  }
  return idx;
}

TEST(StateError, PerfectForecastIsExactlyZero) {
  const auto truth = TrajectoryDataset("t", 0.1, noise(50, 4, 1, 3.0));
  const ForecastPair pair{truth, truth, 1};
  for (auto kind : {ErrorKind::kMse, ErrorKind::kNmse, ErrorKind::kMae, ErrorKind::kNmae}) {
    EXPECT_EQ(state_error(pair, kind), 0.0) << to_string(kind);
  }
}

TEST(StateError, ConstantOffset) {
  Matrix p = noise(40, 3, 2, 2.0);
  const Matrix t = p;
  for (double& v : p.flat()) v += 0.5;
  const ForecastPair pair{TrajectoryDataset("p", 0.1, p), TrajectoryDataset("t", 0.1, t), 1};
  EXPECT_NEAR(state_error(pair, ErrorKind::kMse), 0.25, 1e-14);
  EXPECT_NEAR(state_error(pair, ErrorKind::kMae), 0.5, 1e-14);
}

TEST(StateError, MatchesExplicitLoopsAndNormalisation) {
  const Matrix p = noise(30, 5, 3, 1.0);
  const Matrix t = noise(30, 5, 4, 1.0);
  const ForecastPair pair{TrajectoryDataset("p", 0.1, p), TrajectoryDataset("t", 0.1, t), 2};
  double se = 0.0, ae = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      se += (p(i, j) - t(i, j)) * (p(i, j) - t(i, j));
      ae += std::abs(p(i, j) - t(i, j));
      sum += t(i, j);
    }
  }
  const double mean = sum / 150.0;
  double var = 0.0;
  for (double v : t.flat()) var += (v - mean) * (v - mean);
  var /= 150.0;
  EXPECT_NEAR(state_error(pair, ErrorKind::kMse), se / 150.0, 1e-13);
  EXPECT_NEAR(state_error(pair, ErrorKind::kMae), ae / 150.0, 1e-13);
  EXPECT_NEAR(state_error(pair, ErrorKind::kNmse), se / 150.0 / var, 1e-12);
  EXPECT_NEAR(state_error(pair, ErrorKind::kNmae), ae / 150.0 / std::abs(mean), 1e-12);
  const NormStats norm{2.0, 0.5};
  EXPECT_NEAR(state_error(pair, ErrorKind::kNmse, norm), se / 150.0 / 0.25, 1e-12);
  EXPECT_NEAR(state_error(pair, ErrorKind::kNmae, norm), ae / 150.0 / 2.0, 1e-12);
}

TEST(StateError, Errors) {
  const ForecastPair mismatch{ds(2, 2, {1, 2, 3, 4}), ds(2, 1, {1, 2}), 1};
  EXPECT_THROW(state_error(mismatch, ErrorKind::kMse), InvalidArgument);
  const ForecastPair flat{ds(2, 1, {1, 2}), ds(2, 1, {3, 3}), 1};
  EXPECT_THROW(state_error(flat, ErrorKind::kNmse), InvalidArgument);
  const ForecastPair zero_mean{ds(2, 1, {1, 2}), ds(2, 1, {-1, 1}), 1};
  EXPECT_THROW(state_error(zero_mean, ErrorKind::kNmae), InvalidArgument);
}

TEST(PerStateError, RowMeans) {
  const ForecastPair pair{ds(2, 2, {1, 1, 0, 0}), ds(2, 2, {0, 0, 0, 2}), 1};
  const auto e = per_state_squared_error(pair);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_DOUBLE_EQ(e[0], 1.0);
  EXPECT_DOUBLE_EQ(e[1], 2.0);
}

TEST(DiError, BiasAndValiditySkipping) {
  const auto truth = make_indices({1.0, 2.0, kNaN, 3.0, 2.5}, {0.5, 0.6, kNaN, 0.7, 0.4});
  auto pred = make_indices({1.1, 2.1, 5.0, 3.1, kNaN}, {0.5, 0.6, 0.1, 0.7, kNaN});
  const auto e = di_error(pred, truth, ErrorKind::kMse, IndexKind::kD);
  EXPECT_EQ(e.n_used, 3u);
  EXPECT_EQ(e.n_skipped, 2u);
  EXPECT_NEAR(e.value, 0.01, 1e-14);
  EXPECT_NEAR(di_error(pred, truth, ErrorKind::kMae, IndexKind::kD).value, 0.1, 1e-14);
  EXPECT_EQ(di_error(pred, truth, ErrorKind::kMse, IndexKind::kTheta).value, 0.0);
  // var of {1, 2, 3} is 2/3, mean 2.
  EXPECT_NEAR(di_error(pred, truth, ErrorKind::kNmse, IndexKind::kD).value, 0.01 * 1.5, 1e-13);
  EXPECT_NEAR(di_error(pred, truth, ErrorKind::kNmae, IndexKind::kD).value, 0.05, 1e-13);

  const auto none = make_indices({kNaN, kNaN}, {kNaN, kNaN});
  EXPECT_THROW(di_error(none, none, ErrorKind::kMse, IndexKind::kD), InvalidArgument);
  EXPECT_THROW(di_error(pred, none, ErrorKind::kMse, IndexKind::kD), InvalidArgument);
}

TEST(Did, AllInOneQuadrant) {
  std::vector<double> td, tt, pd, pt;
  for (int i = 0; i < 20; ++i) {
    td.push_back(2.0 + 0.01 * i);
    tt.push_back(0.5);
    pd.push_back(td.back() + 0.3);
    pt.push_back(0.4);
  }
  const auto truth = make_indices(td, tt);
  const auto pred = make_indices(pd, pt);
  const std::vector<double> err(20, 1.0);
  const auto samples = did(pred, truth, err);
  ASSERT_EQ(samples.size(), 20u);
  EXPECT_NEAR(samples[3].did_d, 0.3, 1e-12);
  EXPECT_NEAR(samples[3].did_theta, -0.1, 1e-12);
  const auto q = did_quadrants(samples);
  EXPECT_EQ(q.pp, 0.0);
  EXPECT_EQ(q.pm, 100.0);
  EXPECT_EQ(q.mp, 0.0);
  EXPECT_EQ(q.mm, 0.0);
}

TEST(Did, QuadrantsSumToHundredAndZeroIsPositive) {
  std::vector<DidSample> s = {{0.0, 0.0, 1}, {-1, 1, 1}, {-1, -1, 1}, {1, -1, 1}, {2, 2, 1}};
  const auto q = did_quadrants(s);
  EXPECT_DOUBLE_EQ(q.pp, 40.0);
  EXPECT_DOUBLE_EQ(q.pm + q.mp + q.mm, 60.0);
  EXPECT_DOUBLE_EQ(q.pp + q.pm + q.mp + q.mm, 100.0);
}

TEST(Wasserstein, HandCases) {
  const std::vector<double> a = {0.0};
  const std::vector<double> b = {3.0};
  EXPECT_DOUBLE_EQ(wasserstein_1d(a, b), 3.0);
  const std::vector<double> c = {0.0, 1.0};
  const std::vector<double> d = {0.5};
  EXPECT_DOUBLE_EQ(wasserstein_1d(c, d), 0.5);
  const std::vector<double> e = {5.0, 1.0, 3.0};
  const std::vector<double> f = {3.0, 5.0, 1.0};
  EXPECT_EQ(wasserstein_1d(e, f), 0.0);
  EXPECT_THROW(wasserstein_1d(std::vector<double>{}, a), InvalidArgument);
  EXPECT_THROW(wasserstein_1d(std::vector<double>{kNaN}, a), InvalidArgument);
}

TEST(Wasserstein, MatchesTransportLinearProgram) {
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> size(1, 8);
  std::uniform_real_distribution<double> val(-3.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(size(rng)), b(size(rng));
    for (double& v : a) v = val(rng);
    for (double& v : b) v = val(rng);
    if (trial % 5 == 0) b[0] = a[0];  // shared atoms
    EXPECT_NEAR(wasserstein_1d(a, b), oracle::transport_lp(a, b), 1e-9) << trial;
  }
}

TEST(Wasserstein, MetricAxioms) {
  std::mt19937_64 rng(78);
  std::uniform_int_distribution<int> size(1, 30);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> a(size(rng)), b(size(rng)), c(size(rng));
    for (auto* v : {&a, &b, &c}) {
      for (double& x : *v) x = gauss(rng);
    }
    const double ab = wasserstein_1d(a, b);
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(wasserstein_1d(a, a), 0.0);
    EXPECT_NEAR(ab, wasserstein_1d(b, a), 1e-12);
    EXPECT_LE(wasserstein_1d(a, c), ab + wasserstein_1d(b, c) + 1e-12);
  }
}

TEST(CombinedWd, ShiftedDimension) {
  std::vector<double> d, theta, shifted;
  for (int i = 0; i < 50; ++i) {
    d.push_back(1.5 + 0.02 * i);
    theta.push_back(0.3 + 0.01 * (i % 7));
    shifted.push_back(d.back() + 0.5);
  }
  const auto truth = make_indices(d, theta);
  const auto pred = make_indices(shifted, theta);
  const auto w = combined_wd(pred, truth);
  EXPECT_NEAR(w.wd_d, 0.5, 1e-12);
  EXPECT_EQ(w.wd_theta, 0.0);
  EXPECT_NEAR(w.wd, 0.5, 1e-12);
  const auto swapped = combined_wd(truth, pred);
  EXPECT_EQ(swapped.wd, w.wd);
  EXPECT_EQ(swapped.wd_d, w.wd_d);
}

TEST(LatWeightedRmse, ToyGridAndDegenerateCases) {
  const std::vector<double> lats = {0.0, 60.0};
  const Matrix truth(1, 2, 0.0);
  const Matrix pred(1, 2, 1.0);
  // Weights 1/0.75 and 0.5/0.75 with unit squared error.
  EXPECT_NEAR(lat_weighted_rmse(pred, truth, lats), std::sqrt(4.0 / 3.0 + 2.0 / 3.0), 1e-14);
  EXPECT_EQ(lat_weighted_rmse(pred, pred, lats), 0.0);

  // Equal latitudes give unit weights: sqrt of the summed squared error.
  const std::vector<double> same = {30.0, 30.0};
  const Matrix t2(2, 4, std::vector<double>{0, 0, 0, 0, 0, 0, 0, 0});
  const Matrix p2(2, 4, std::vector<double>{1, 1, 1, 1, 2, 0, 0, 0});
  EXPECT_NEAR(lat_weighted_rmse(p2, t2, same), (2.0 + 2.0) / 2.0, 1e-14);

  const std::vector<double> poles = {90.0, -90.0};
  EXPECT_THROW(lat_weighted_rmse(pred, truth, poles), InvalidArgument);
  EXPECT_THROW(lat_weighted_rmse(pred, truth, std::vector<double>{0.0, 0.0, 0.0}),
               InvalidArgument);
}

TEST(QuantileBins, ConservationAndMonotoneRanks) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> gauss;
  std::vector<double> idx(1003), err(1003);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    idx[i] = gauss(rng);
    err[i] = std::exp(gauss(rng));
  }
  idx[10] = kNaN;
  const auto c = quantile_bin_errors(idx, err, 10);
  std::size_t n = 0;
  double weighted = 0.0;
  for (std::size_t b = 0; b < 10; ++b) {
    n += c.count[b];
    weighted += c.mean_error[b] * static_cast<double>(c.count[b]);
    if (b > 0) {
      EXPECT_LE(c.index_hi[b - 1], c.index_lo[b]);
    }
  }
  EXPECT_EQ(n, 1002u);
  double total = 0.0;
  for (std::size_t i = 0; i < err.size(); ++i) {
    if (i != 10) total += err[i];
  }
  EXPECT_NEAR(weighted, total, 1e-12 * total);
  // 1002 = 10 * 100 + 2: the top two bins take the extras.
  EXPECT_EQ(c.count.front(), 100u);
  EXPECT_EQ(c.count[8], 101u);
  EXPECT_EQ(c.count[9], 101u);
  EXPECT_EQ(c.bin_edges.front(), 0.0);
  EXPECT_EQ(c.bin_edges.back(), 1.0);
}

TEST(QuantileBins, ErrorsGrowingWithIndex) {
  std::vector<double> idx, err;
  for (int i = 0; i < 100; ++i) {
    idx.push_back(99 - i);
    err.push_back(99 - i);
  }
  const auto c = quantile_bin_errors(idx, err, 10);
  for (std::size_t b = 0; b < 10; ++b) EXPECT_DOUBLE_EQ(c.mean_error[b], 10.0 * b + 4.5);
  EXPECT_THROW(quantile_bin_errors(std::vector<double>(5, 1.0), std::vector<double>(5, 1.0), 10),
               InvalidArgument);
  EXPECT_THROW(quantile_bin_errors(idx, err, 1), InvalidArgument);
}

TEST(Report, BuildAndJsonRoundTrip) {
  const std::size_t n = 60;
  const Matrix t = noise(n, 3, 9, 1.0);
  Matrix p = t;
  for (std::size_t i = 0; i < n; ++i) p(i, 0) += 0.01 * static_cast<double>(i);
  const ForecastPair pair{TrajectoryDataset("p", 0.1, p), TrajectoryDataset("t", 0.1, t), 1};
  std::vector<double> td, tt, pd, pt;
  for (std::size_t i = 0; i < n; ++i) {
    td.push_back(2.0 + std::sin(0.3 * i));
    tt.push_back(0.5 + 0.2 * std::cos(0.7 * i));
    pd.push_back(td.back() + 0.05);
    pt.push_back(tt.back());
  }
  td[4] = kNaN;
  tt[4] = kNaN;
  pd[4] = kNaN;
  const auto truth = make_indices(td, tt);
  const auto pred = make_indices(pd, pt);
  const auto r = build_report(pair, pred, truth);
  EXPECT_EQ(r.n_valid, n - 1);
  EXPECT_EQ(r.n_skipped, 1u);
  EXPECT_NEAR(r.mse_d, 0.0025, 1e-12);
  EXPECT_EQ(r.mse_theta, 0.0);
  EXPECT_NEAR(r.wd_d, 0.05, 1e-12);
  EXPECT_EQ(r.did_quadrants.pp, 100.0);
  EXPECT_EQ(r.did.size(), n - 1);
  EXPECT_EQ(r.curve_d.n_bins, 10u);

  nlohmann::json j = r;
  const auto text = j.dump();
  const EvaluationReport back = nlohmann::json::parse(text).get<EvaluationReport>();
  EXPECT_EQ(back.mse, r.mse);
  EXPECT_EQ(back.nmae_theta, r.nmae_theta);
  EXPECT_EQ(back.wd, r.wd);
  EXPECT_EQ(back.curve_theta.mean_error, r.curve_theta.mean_error);
  EXPECT_EQ(back.curve_d.count, r.curve_d.count);
  EXPECT_EQ(back.n_valid, r.n_valid);
  EXPECT_EQ(back.did.size(), r.did.size());
  EXPECT_EQ(back.did_quadrants.pp, r.did_quadrants.pp);
  EXPECT_FALSE(back.lat_rmse.has_value());
}

TEST(Report, FieldNamedInError) {
  const ForecastPair pair{ds(3, 1, {1, 2, 3}), ds(3, 1, {1, 2, 3}), 1};
  // Constant true d makes nmse_d undefined.
  const auto truth = make_indices({1, 1, 1}, {0.1, 0.2, 0.3});
  try {
    build_report(pair, truth, truth, std::nullopt, 2);
    FAIL();
  } catch (const InvalidArgument& e) {
    EXPECT_NE(std::string(e.what()).find("nmse_d"), std::string::npos) << e.what();
  }
}

TEST(Report, CurveCsv) {
  const auto c = quantile_bin_errors(std::vector<double>{1, 2, 3, 4}, std::vector<double>{1, 1, 2, 2}, 2);
  const auto path = std::filesystem::temp_directory_path() / "dynerr_curve_test.csv";
  write_curve_csv(c, path);
  std::ifstream in(path);
  std::string header, row;
  std::getline(in, header);
  std::getline(in, row);
  EXPECT_EQ(header, "bin,quantile_lo,quantile_hi,mean_error,count");
  EXPECT_EQ(row.substr(0, 2), "0,");
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace dynerr
