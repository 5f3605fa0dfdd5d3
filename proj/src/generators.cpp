#include "dynerr/generators.hpp"

#include <cmath>
#include <mutex>
#include <numbers>
#include <random>

#include <fftw3.h>

namespace dynerr {

namespace {

// FFTW planning is not thread-safe; execution is.
std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

constexpr int kContourPoints = 32;

}  // namespace

void LorenzParams::validate() const {
  if (!(dt > 0.0)) throw InvalidArgument("lorenz dt must be > 0");
  if (n_steps < 1) throw InvalidArgument("lorenz n_steps must be >= 1");
  if (transient_discard >= n_steps) {
    throw InvalidArgument("lorenz transient_discard must be below n_steps");
  }
}

std::array<double, 3> lorenz_rk4_step(const LorenzParams& p, const std::array<double, 3>& x,
                                      double dt) {
  auto f = [&](const std::array<double, 3>& s) {
    return std::array<double, 3>{p.sigma * (s[1] - s[0]), s[0] * (p.rho - s[2]) - s[1],
                                 s[0] * s[1] - p.beta * s[2]};
  };
  auto axpy = [](const std::array<double, 3>& s, const std::array<double, 3>& k, double h) {
    return std::array<double, 3>{s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]};
  };
  const auto k1 = f(x);
  const auto k2 = f(axpy(x, k1, 0.5 * dt));
  const auto k3 = f(axpy(x, k2, 0.5 * dt));
  const auto k4 = f(axpy(x, k3, dt));
  std::array<double, 3> out{};
  for (int i = 0; i < 3; ++i) {
    out[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

TrajectoryDataset simulate_lorenz(const LorenzParams& params) {
  params.validate();
  const std::size_t n_out = params.n_steps - params.transient_discard;
  std::vector<double> data;
  data.reserve(n_out * 3);
  std::array<double, 3> x = params.init;
  for (std::size_t k = 0; k < params.n_steps; ++k) {
    if (k > 0) x = lorenz_rk4_step(params, x, params.dt);
    if (!std::isfinite(x[0]) || !std::isfinite(x[1]) || !std::isfinite(x[2])) {
      throw BlowUp("lorenz integration blew up at step " + std::to_string(k), k);
    }
    if (k >= params.transient_discard) data.insert(data.end(), x.begin(), x.end());
  }
  return TrajectoryDataset("lorenz", params.dt, Matrix(n_out, 3, std::move(data)),
                           params.transient_discard);
}

void KsParams::validate() const {
  if (!(L > 0.0)) throw InvalidArgument("ks L must be > 0");
  if (n_grid < 8 || (n_grid & (n_grid - 1)) != 0) {
    throw InvalidArgument("ks n_grid must be a power of two >= 8");
  }
  if (!(dt_internal > 0.0)) throw InvalidArgument("ks dt_internal must be > 0");
  if (downsample < 1) throw InvalidArgument("ks downsample must be >= 1");
  if (transient_discard >= n_steps_internal) {
    throw InvalidArgument("ks transient_discard must be below n_steps_internal");
  }
}

KsIntegrator::KsIntegrator(const KsParams& params)
    : params_(params), n_modes_(params.n_grid / 2 + 1) {
  params_.validate();
  const std::size_t n = params_.n_grid;
  const double h = params_.dt_internal;
  v_.assign(n_modes_, cplx(0.0, 0.0));
  e_.resize(n_modes_);
  e2_.resize(n_modes_);
  q_.resize(n_modes_);
  f1_.resize(n_modes_);
  f2_.resize(n_modes_);
  f3_.resize(n_modes_);
  g_.resize(n_modes_);
  keep_.resize(n_modes_);
  real_buf_.resize(n);
  spec_buf_.resize(n_modes_);

  const std::size_t nyquist = n / 2;
  for (std::size_t j = 0; j < n_modes_; ++j) {
    const double k = j == nyquist ? 0.0 : 2.0 * std::numbers::pi * static_cast<double>(j) / params_.L;
    const double lin = k * k - k * k * k * k;
    e_[j] = std::exp(h * lin);
    e2_[j] = std::exp(0.5 * h * lin);
    g_[j] = cplx(0.0, -0.5 * k);
    keep_[j] = 3 * j <= n && j != nyquist ? 1 : 0;

    // phi-function coefficients by contour averaging around h * lin.
    double q = 0.0, f1 = 0.0, f2 = 0.0, f3 = 0.0;
    for (int m = 1; m <= kContourPoints; ++m) {
      const cplx r = std::exp(cplx(0.0, std::numbers::pi * (m - 0.5) / kContourPoints));
      const cplx lr = h * lin + r;
      const cplx elr = std::exp(lr);
      const cplx lr3 = lr * lr * lr;
      q += ((std::exp(0.5 * lr) - 1.0) / lr).real();
      f1 += ((-4.0 - lr + elr * (4.0 - 3.0 * lr + lr * lr)) / lr3).real();
      f2 += ((2.0 + lr + elr * (lr - 2.0)) / lr3).real();
      f3 += ((-4.0 - 3.0 * lr - lr * lr + elr * (4.0 - lr)) / lr3).real();
    }
    q_[j] = h * q / kContourPoints;
    f1_[j] = h * f1 / kContourPoints;
    f2_[j] = h * f2 / kContourPoints;
    f3_[j] = h * f3 / kContourPoints;
  }

  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  plan_r2c_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_buf_.data(),
                                   reinterpret_cast<fftw_complex*>(spec_buf_.data()),
                                   FFTW_ESTIMATE);
  plan_c2r_ = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                   reinterpret_cast<fftw_complex*>(spec_buf_.data()),
                                   real_buf_.data(), FFTW_ESTIMATE);
}

KsIntegrator::~KsIntegrator() {
  std::lock_guard<std::mutex> lock(fftw_planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(plan_r2c_));
  fftw_destroy_plan(static_cast<fftw_plan>(plan_c2r_));
}

void KsIntegrator::set_state(std::span<const double> u) {
  if (u.size() != params_.n_grid) throw InvalidArgument("ks state has wrong grid size");
  std::copy(u.begin(), u.end(), real_buf_.begin());
  fftw_execute(static_cast<fftw_plan>(plan_r2c_));
  v_ = spec_buf_;
}

std::vector<double> KsIntegrator::state() const {
  spec_buf_ = v_;
  fftw_execute(static_cast<fftw_plan>(plan_c2r_));
  std::vector<double> u(real_buf_);
  const double scale = 1.0 / static_cast<double>(params_.n_grid);
  for (double& x : u) x *= scale;
  return u;
}

void KsIntegrator::nonlinear(const std::vector<cplx>& v, std::vector<cplx>& out) const {
  spec_buf_ = v;
  fftw_execute(static_cast<fftw_plan>(plan_c2r_));
  const double scale = 1.0 / static_cast<double>(params_.n_grid);
  for (double& x : real_buf_) {
    const double u = x * scale;
    x = u * u;
  }
  fftw_execute(static_cast<fftw_plan>(plan_r2c_));
  out.resize(n_modes_);
  for (std::size_t j = 0; j < n_modes_; ++j) {
    out[j] = keep_[j] ? g_[j] * spec_buf_[j] : cplx(0.0, 0.0);
  }
}

void KsIntegrator::step() {
  std::vector<cplx> nv, na, nb, nc;
  std::vector<cplx> a(n_modes_), b(n_modes_), c(n_modes_);
  nonlinear(v_, nv);
  for (std::size_t j = 0; j < n_modes_; ++j) a[j] = e2_[j] * v_[j] + q_[j] * nv[j];
  nonlinear(a, na);
  for (std::size_t j = 0; j < n_modes_; ++j) b[j] = e2_[j] * v_[j] + q_[j] * na[j];
  nonlinear(b, nb);
  for (std::size_t j = 0; j < n_modes_; ++j) c[j] = e2_[j] * a[j] + q_[j] * (2.0 * nb[j] - nv[j]);
  nonlinear(c, nc);
  bool finite = true;
  for (std::size_t j = 0; j < n_modes_; ++j) {
    v_[j] = e_[j] * v_[j] + nv[j] * f1_[j] + 2.0 * (na[j] + nb[j]) * f2_[j] + nc[j] * f3_[j];
    finite = finite && std::isfinite(v_[j].real()) && std::isfinite(v_[j].imag());
  }
  ++steps_;
  if (!finite) {
    throw BlowUp("ks integration blew up at internal step " + std::to_string(steps_), steps_);
  }
}

std::vector<double> ks_initial_condition(const KsParams& params, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  // 53 random mantissa bits keep the factor identical across standard libraries.
  const double factor = 0.5 + static_cast<double>(rng() >> 11) * 0x1p-53;
  std::vector<double> u(params.n_grid);
  for (std::size_t i = 0; i < params.n_grid; ++i) {
    const double x = params.L * static_cast<double>(i) / static_cast<double>(params.n_grid);
    const double phase = 2.0 * std::numbers::pi * x / params.L;
    u[i] = factor * std::cos(phase) * (1.0 + std::sin(phase));
  }
  return u;
}

TrajectoryDataset simulate_ks(const KsParams& params, std::span<const double> initial) {
  params.validate();
  KsIntegrator integrator(params);
  integrator.set_state(initial);
  Matrix out;
  for (std::size_t k = 0; k < params.n_steps_internal; ++k) {
    if (k > 0) integrator.step();
    if (k >= params.transient_discard && (k - params.transient_discard) % params.downsample == 0) {
      out.append_row(integrator.state());
    }
  }
  return TrajectoryDataset("ks", params.dt_internal * static_cast<double>(params.downsample),
                           std::move(out), params.transient_discard / params.downsample);
}

TrajectoryDataset simulate_ks(const KsParams& params, std::uint64_t seed) {
  return simulate_ks(params, ks_initial_condition(params, seed));
}

System parse_system(const std::string& name) {
  if (name == "lorenz") return System::kLorenz;
  if (name == "ks") return System::kKs;
  throw InvalidArgument("unknown system '" + name + "' (expected lorenz or ks)");
}

const char* to_string(System system) { return system == System::kLorenz ? "lorenz" : "ks"; }

TimeScale time_scale(System system, double dataset_dt) {
  if (!(dataset_dt > 0.0)) throw InvalidArgument("dataset dt must be > 0");
  TimeScale ts;
  ts.system = system;
  ts.lyapunov_exponent = system == System::kLorenz ? kLorenzLyapunov : kKsLyapunov;
  ts.lt_model_units = 1.0 / ts.lyapunov_exponent;
  ts.lt_steps = static_cast<std::size_t>(std::llround(ts.lt_model_units / dataset_dt));
  return ts;
}

std::size_t rollout_preset_steps(System system, double dataset_dt) {
  const TimeScale ts = time_scale(system, dataset_dt);
  return (system == System::kLorenz ? 10 : 3) * ts.lt_steps;
}

}  // namespace dynerr
