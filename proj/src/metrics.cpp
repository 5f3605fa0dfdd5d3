#include "dynerr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>

namespace dynerr {

namespace {

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

Moments moments(std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, ss / n};
}

void check_same_length(const DynamicalIndices& a, const DynamicalIndices& b) {
  if (a.size() != b.size()) {
    throw InvalidArgument("index sets differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
}

std::vector<double> valid_values(const DynamicalIndices& idx, IndexKind which) {
  const auto& src = which == IndexKind::kD ? idx.d : idx.theta;
  std::vector<double> out;
  out.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (idx.valid[i]) out.push_back(src[i]);
  }
  return out;
}

double mean_of(std::span<const double> v) {
  if (v.empty()) throw InvalidArgument("mean of an empty set");
  return moments(v).mean;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMse: return "mse";
    case ErrorKind::kNmse: return "nmse";
    case ErrorKind::kMae: return "mae";
    case ErrorKind::kNmae: return "nmae";
  }
  return "?";
}

const char* to_string(IndexKind kind) { return kind == IndexKind::kD ? "d" : "theta"; }

void ForecastPair::validate() const {
  if (pred.n_times() != truth.n_times() || pred.n_space() != truth.n_space()) {
    throw InvalidArgument("forecast/truth shape mismatch: pred " + std::to_string(pred.n_times()) +
                          "x" + std::to_string(pred.n_space()) + ", truth " +
                          std::to_string(truth.n_times()) + "x" + std::to_string(truth.n_space()));
  }
  if (pred.dt() != truth.dt()) throw InvalidArgument("forecast/truth dt mismatch");
  if (lead_steps < 1) throw InvalidArgument("lead_steps must be >= 1");
}

double state_error(const ForecastPair& pair, ErrorKind kind, const std::optional<NormStats>& norm) {
  pair.validate();
  const auto yhat = pair.pred.states().flat();
  const auto y = pair.truth.states().flat();
  const double count = static_cast<double>(y.size());
  const bool squared = kind == ErrorKind::kMse || kind == ErrorKind::kNmse;
  double sum = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double diff = yhat[k] - y[k];
    sum += squared ? diff * diff : std::abs(diff);
  }
  const double base = sum / count;
  if (kind == ErrorKind::kMse || kind == ErrorKind::kMae) return base;

  Moments truth_stats;
  if (norm) {
    truth_stats = {norm->mean, norm->std * norm->std};
  } else {
    truth_stats = moments(y);
  }
  if (kind == ErrorKind::kNmse) {
    if (!(truth_stats.variance > 0.0)) throw InvalidArgument("nmse undefined: sigma_y = 0");
    return base / truth_stats.variance;
  }
  if (truth_stats.mean == 0.0) throw InvalidArgument("nmae undefined: mu_y = 0");
  return base / std::abs(truth_stats.mean);
}

std::vector<double> per_state_squared_error(const ForecastPair& pair) {
  pair.validate();
  const Matrix& p = pair.pred.states();
  const Matrix& t = pair.truth.states();
  std::vector<double> out(p.rows());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) {
      const double diff = p(i, j) - t(i, j);
      s += diff * diff;
    }
    out[i] = s / static_cast<double>(p.cols());
  }
  return out;
}

DiError di_error(const DynamicalIndices& pred_idx, const DynamicalIndices& true_idx,
                 ErrorKind kind, IndexKind which) {
  check_same_length(pred_idx, true_idx);
  const auto& hat = which == IndexKind::kD ? pred_idx.d : pred_idx.theta;
  const auto& ref = which == IndexKind::kD ? true_idx.d : true_idx.theta;
  const bool squared = kind == ErrorKind::kMse || kind == ErrorKind::kNmse;

  DiError res;
  double sum = 0.0;
  std::vector<double> truth_values;
  for (std::size_t i = 0; i < hat.size(); ++i) {
    if (!(pred_idx.valid[i] && true_idx.valid[i])) continue;
    const double diff = hat[i] - ref[i];
    sum += squared ? diff * diff : std::abs(diff);
    truth_values.push_back(ref[i]);
  }
  res.n_used = truth_values.size();
  res.n_skipped = hat.size() - res.n_used;
  if (res.n_used == 0) {
    throw InvalidArgument(std::string("no jointly valid states for ") + to_string(kind) + "_" +
                          to_string(which));
  }
  res.value = sum / static_cast<double>(res.n_used);
  if (kind == ErrorKind::kNmse || kind == ErrorKind::kNmae) {
    const Moments m = moments(truth_values);
    if (kind == ErrorKind::kNmse) {
      if (!(m.variance > 0.0)) {
        throw InvalidArgument(std::string("nmse_") + to_string(which) + " undefined: zero variance");
      }
      res.value /= m.variance;
    } else {
      if (m.mean == 0.0) {
        throw InvalidArgument(std::string("nmae_") + to_string(which) + " undefined: zero mean");
      }
      res.value /= std::abs(m.mean);
    }
  }
  return res;
}

std::vector<DidSample> did(const DynamicalIndices& pred_idx, const DynamicalIndices& true_idx,
                           std::span<const double> per_state_err) {
  check_same_length(pred_idx, true_idx);
  if (per_state_err.size() != pred_idx.size()) {
    throw InvalidArgument("per-state error length does not match the index sets");
  }
  std::vector<DidSample> out;
  for (std::size_t i = 0; i < pred_idx.size(); ++i) {
    if (!(pred_idx.valid[i] && true_idx.valid[i])) continue;
    out.push_back({pred_idx.d[i] - true_idx.d[i], pred_idx.theta[i] - true_idx.theta[i],
                   per_state_err[i]});
  }
  return out;
}

QuadrantShares did_quadrants(std::span<const DidSample> samples) {
  QuadrantShares q;
  if (samples.empty()) return q;
  double pp = 0, pm = 0, mp = 0, mm = 0;
  for (const auto& s : samples) {
    const bool dp = s.did_d >= 0.0;
    const bool tp = s.did_theta >= 0.0;
    if (dp && tp) {
      ++pp;
    } else if (dp) {
      ++pm;
    } else if (tp) {
      ++mp;
    } else {
      ++mm;
    }
  }
  const double scale = 100.0 / static_cast<double>(samples.size());
  return {pp * scale, pm * scale, mp * scale, mm * scale};
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidArgument("wasserstein_1d needs non-empty inputs");
  for (double v : a) {
    if (!std::isfinite(v)) throw InvalidArgument("wasserstein_1d input is not finite");
  }
  for (double v : b) {
    if (!std::isfinite(v)) throw InvalidArgument("wasserstein_1d input is not finite");
  }
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const double na = static_cast<double>(sa.size());
  const double nb = static_cast<double>(sb.size());

  // Integrate |F_a - F_b| over the merged support, one segment per gap.
  std::size_t ia = 0;
  std::size_t ib = 0;
  double x = std::min(sa.front(), sb.front());
  double total = 0.0;
  while (ia < sa.size() || ib < sb.size()) {
    // Consume every sample at the current point.
    while (ia < sa.size() && sa[ia] == x) ++ia;
    while (ib < sb.size() && sb[ib] == x) ++ib;
    if (ia == sa.size() && ib == sb.size()) break;
    double next = 0.0;
    if (ia == sa.size()) {
      next = sb[ib];
    } else if (ib == sb.size()) {
      next = sa[ia];
    } else {
      next = std::min(sa[ia], sb[ib]);
    }
    const double fa = static_cast<double>(ia) / na;
    const double fb = static_cast<double>(ib) / nb;
    total += std::abs(fa - fb) * (next - x);
    x = next;
  }
  return total;
}

CombinedWd combined_wd(const DynamicalIndices& pred_idx, const DynamicalIndices& true_idx) {
  const auto pd = valid_values(pred_idx, IndexKind::kD);
  const auto td = valid_values(true_idx, IndexKind::kD);
  if (pd.empty() || td.empty()) throw InvalidArgument("combined_wd needs valid states on both sides");
  const auto pt = valid_values(pred_idx, IndexKind::kTheta);
  const auto tt = valid_values(true_idx, IndexKind::kTheta);
  CombinedWd out;
  out.wd_d = wasserstein_1d(pd, td);
  out.wd_theta = wasserstein_1d(pt, tt);
  out.wd = std::sqrt(out.wd_d * out.wd_d + out.wd_theta * out.wd_theta);
  return out;
}

double lat_weighted_rmse(const Matrix& pred, const Matrix& truth, std::span<const double> lats_deg) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols()) {
    throw InvalidArgument("lat_weighted_rmse shape mismatch");
  }
  const std::size_t n_lat = lats_deg.size();
  if (n_lat == 0 || pred.cols() % n_lat != 0) {
    throw InvalidArgument("grid width is not a multiple of the latitude count");
  }
  if (pred.rows() == 0) throw InvalidArgument("lat_weighted_rmse needs at least one sample");
  const std::size_t n_lon = pred.cols() / n_lat;

  std::vector<double> cosines(n_lat);
  double mean_cos = 0.0;
  for (std::size_t j = 0; j < n_lat; ++j) {
    const double lat = lats_deg[j];
    if (!(lat >= -90.0 && lat <= 90.0)) throw InvalidArgument("latitude outside [-90, 90]");
    cosines[j] = std::abs(lat) == 90.0 ? 0.0 : std::cos(lat * std::numbers::pi / 180.0);
    mean_cos += cosines[j];
  }
  mean_cos /= static_cast<double>(n_lat);
  if (!(mean_cos > 0.0)) throw InvalidArgument("all latitude weights are zero");

  double total = 0.0;
  for (std::size_t i = 0; i < pred.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_lat; ++j) {
      const double w = cosines[j] / mean_cos;
      for (std::size_t k = 0; k < n_lon; ++k) {
        const double diff = pred(i, j * n_lon + k) - truth(i, j * n_lon + k);
        s += w * diff * diff;
      }
    }
    total += std::sqrt(s);
  }
  return total / static_cast<double>(pred.rows());
}

BinnedErrorCurve quantile_bin_errors(std::span<const double> index_values,
                                     std::span<const double> errors, std::size_t n_bins) {
  if (index_values.size() != errors.size()) {
    throw InvalidArgument("index values and errors differ in length");
  }
  if (n_bins < 2) throw InvalidArgument("need at least 2 bins");
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < index_values.size(); ++i) {
    if (std::isfinite(index_values[i])) order.push_back(i);
  }
  const std::size_t n = order.size();
  if (n < n_bins) {
    throw InvalidArgument("only " + std::to_string(n) + " valid samples for " +
                          std::to_string(n_bins) + " bins");
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return index_values[a] < index_values[b];
  });

  BinnedErrorCurve c;
  c.n_bins = n_bins;
  const std::size_t base = n / n_bins;
  const std::size_t extra = n % n_bins;
  std::size_t start = 0;
  c.bin_edges.push_back(0.0);
  for (std::size_t b = 0; b < n_bins; ++b) {
    // The top `extra` bins take one additional sample.
    const std::size_t size = base + (b >= n_bins - extra ? 1 : 0);
    double sum = 0.0;
    for (std::size_t k = start; k < start + size; ++k) sum += errors[order[k]];
    c.count.push_back(size);
    c.mean_error.push_back(sum / static_cast<double>(size));
    c.index_lo.push_back(index_values[order[start]]);
    c.index_hi.push_back(index_values[order[start + size - 1]]);
    start += size;
    c.bin_edges.push_back(static_cast<double>(start) / static_cast<double>(n));
  }
  return c;
}

EvaluationReport build_report(const ForecastPair& pair, const DynamicalIndices& pred_idx,
                              const DynamicalIndices& true_idx, const std::optional<NormStats>& norm,
                              std::size_t n_bins) {
  pair.validate();
  check_same_length(pred_idx, true_idx);
  if (pred_idx.size() != pair.pred.n_times()) {
    throw InvalidArgument("index sets do not match the forecast length");
  }
  auto field = [](const char* name, auto&& fn) {
    try {
      return fn();
    } catch (const Error& e) {
      throw InvalidArgument(std::string("report field ") + name + ": " + e.what());
    }
  };

  EvaluationReport r;
  r.mse = field("mse", [&] { return state_error(pair, ErrorKind::kMse, norm); });
  r.nmse = field("nmse", [&] { return state_error(pair, ErrorKind::kNmse, norm); });
  r.mae = field("mae", [&] { return state_error(pair, ErrorKind::kMae, norm); });
  r.nmae = field("nmae", [&] { return state_error(pair, ErrorKind::kNmae, norm); });

  auto di = [&](const char* name, ErrorKind kind, IndexKind which) {
    return field(name, [&] { return di_error(pred_idx, true_idx, kind, which); });
  };
  const DiError mse_d = di("mse_d", ErrorKind::kMse, IndexKind::kD);
  r.mse_d = mse_d.value;
  r.n_valid = mse_d.n_used;
  r.n_skipped = mse_d.n_skipped;
  r.mse_theta = di("mse_theta", ErrorKind::kMse, IndexKind::kTheta).value;
  r.nmse_d = di("nmse_d", ErrorKind::kNmse, IndexKind::kD).value;
  r.nmse_theta = di("nmse_theta", ErrorKind::kNmse, IndexKind::kTheta).value;
  r.mae_d = di("mae_d", ErrorKind::kMae, IndexKind::kD).value;
  r.mae_theta = di("mae_theta", ErrorKind::kMae, IndexKind::kTheta).value;
  r.nmae_d = di("nmae_d", ErrorKind::kNmae, IndexKind::kD).value;
  r.nmae_theta = di("nmae_theta", ErrorKind::kNmae, IndexKind::kTheta).value;

  const CombinedWd w = field("wd", [&] { return combined_wd(pred_idx, true_idx); });
  r.wd = w.wd;
  r.wd_d = w.wd_d;
  r.wd_theta = w.wd_theta;

  r.mean_d_pred = mean_of(valid_values(pred_idx, IndexKind::kD));
  r.mean_theta_pred = mean_of(valid_values(pred_idx, IndexKind::kTheta));
  r.mean_d_true = mean_of(valid_values(true_idx, IndexKind::kD));
  r.mean_theta_true = mean_of(valid_values(true_idx, IndexKind::kTheta));

  const auto errs = per_state_squared_error(pair);
  r.did = did(pred_idx, true_idx, errs);
  r.did_quadrants = did_quadrants(r.did);
  r.curve_d = field("curve_d", [&] { return quantile_bin_errors(true_idx.d, errs, n_bins); });
  r.curve_theta =
      field("curve_theta", [&] { return quantile_bin_errors(true_idx.theta, errs, n_bins); });
  return r;
}

void to_json(nlohmann::json& j, const BinnedErrorCurve& c) {
  j = nlohmann::json{{"n_bins", c.n_bins},       {"bin_edges", c.bin_edges},
                     {"index_lo", c.index_lo},   {"index_hi", c.index_hi},
                     {"mean_error", c.mean_error}, {"count", c.count}};
}

void from_json(const nlohmann::json& j, BinnedErrorCurve& c) {
  j.at("n_bins").get_to(c.n_bins);
  j.at("bin_edges").get_to(c.bin_edges);
  j.at("index_lo").get_to(c.index_lo);
  j.at("index_hi").get_to(c.index_hi);
  j.at("mean_error").get_to(c.mean_error);
  j.at("count").get_to(c.count);
}

void to_json(nlohmann::json& j, const EvaluationReport& r) {
  nlohmann::json did = nlohmann::json::array();
  for (const auto& s : r.did) {
    did.push_back({{"did_d", s.did_d}, {"did_theta", s.did_theta}, {"mse_state", s.mse_state}});
  }
  j = nlohmann::json{
      {"mse", r.mse},
      {"nmse", r.nmse},
      {"mae", r.mae},
      {"nmae", r.nmae},
      {"mse_d", r.mse_d},
      {"mse_theta", r.mse_theta},
      {"nmse_d", r.nmse_d},
      {"nmse_theta", r.nmse_theta},
      {"mae_d", r.mae_d},
      {"mae_theta", r.mae_theta},
      {"nmae_d", r.nmae_d},
      {"nmae_theta", r.nmae_theta},
      {"wd", r.wd},
      {"wd_d", r.wd_d},
      {"wd_theta", r.wd_theta},
      {"mean_d_pred", r.mean_d_pred},
      {"mean_theta_pred", r.mean_theta_pred},
      {"mean_d_true", r.mean_d_true},
      {"mean_theta_true", r.mean_theta_true},
      {"did", std::move(did)},
      {"did_quadrants",
       {{"pp", r.did_quadrants.pp},
        {"pm", r.did_quadrants.pm},
        {"mp", r.did_quadrants.mp},
        {"mm", r.did_quadrants.mm}}},
      {"curves", {{"d", r.curve_d}, {"theta", r.curve_theta}}},
      {"n_valid", r.n_valid},
      {"n_skipped", r.n_skipped},
  };
  if (r.lat_rmse) j["lat_rmse"] = *r.lat_rmse;
}

void from_json(const nlohmann::json& j, EvaluationReport& r) {
  j.at("mse").get_to(r.mse);
  j.at("nmse").get_to(r.nmse);
  j.at("mae").get_to(r.mae);
  j.at("nmae").get_to(r.nmae);
  j.at("mse_d").get_to(r.mse_d);
  j.at("mse_theta").get_to(r.mse_theta);
  j.at("nmse_d").get_to(r.nmse_d);
  j.at("nmse_theta").get_to(r.nmse_theta);
  j.at("mae_d").get_to(r.mae_d);
  j.at("mae_theta").get_to(r.mae_theta);
  j.at("nmae_d").get_to(r.nmae_d);
  j.at("nmae_theta").get_to(r.nmae_theta);
  j.at("wd").get_to(r.wd);
  j.at("wd_d").get_to(r.wd_d);
  j.at("wd_theta").get_to(r.wd_theta);
  j.at("mean_d_pred").get_to(r.mean_d_pred);
  j.at("mean_theta_pred").get_to(r.mean_theta_pred);
  j.at("mean_d_true").get_to(r.mean_d_true);
  j.at("mean_theta_true").get_to(r.mean_theta_true);
  r.did.clear();
  for (const auto& s : j.at("did")) {
    r.did.push_back({s.at("did_d").get<double>(), s.at("did_theta").get<double>(),
                     s.at("mse_state").get<double>()});
  }
  const auto& q = j.at("did_quadrants");
  r.did_quadrants = {q.at("pp").get<double>(), q.at("pm").get<double>(),
                     q.at("mp").get<double>(), q.at("mm").get<double>()};
  j.at("curves").at("d").get_to(r.curve_d);
  j.at("curves").at("theta").get_to(r.curve_theta);
  j.at("n_valid").get_to(r.n_valid);
  j.at("n_skipped").get_to(r.n_skipped);
  if (j.contains("lat_rmse")) {
    r.lat_rmse = j.at("lat_rmse").get<double>();
  } else {
    r.lat_rmse.reset();
  }
}

void write_curve_csv(const BinnedErrorCurve& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "bin,quantile_lo,quantile_hi,mean_error,count\n";
  for (std::size_t b = 0; b < curve.n_bins; ++b) {
    out << b << ',' << fmt17(curve.bin_edges[b]) << ',' << fmt17(curve.bin_edges[b + 1]) << ','
        << fmt17(curve.mean_error[b]) << ',' << curve.count[b] << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace dynerr
