#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dynerr/core.hpp"

namespace dynerr {

struct LorenzParams {
  double sigma = 10.0;
  double rho = 28.0;
  double beta = 2.667;
  double dt = 0.01;
  std::size_t n_steps = 1'000'000;
  std::array<double, 3> init = {1.0, 1.0, 1.0};
  std::size_t transient_discard = 1'000;

  void validate() const;
};

// Fixed-step classical RK4. Row k of the output is the state after
// transient_discard + k steps; N_t = n_steps - transient_discard.
TrajectoryDataset simulate_lorenz(const LorenzParams& params);

// One RK4 step of the Lorenz system, exposed for convergence studies.
std::array<double, 3> lorenz_rk4_step(const LorenzParams& params, const std::array<double, 3>& x,
                                      double dt);

struct KsParams {
  double L = 22.0;
  std::size_t n_grid = 64;
  double dt_internal = 0.01;
  std::size_t n_steps_internal = 2'500'000;
  std::size_t transient_discard = 10'000;
  std::size_t downsample = 25;

  void validate() const;
};

// ETDRK4 integrator for u_t + u u_x + u_xx + u_xxxx = 0 on a periodic
// domain [0, L), pseudo-spectral with 2/3-rule dealiasing of the nonlinear
// term. The state lives in Fourier space between steps.
class KsIntegrator {
 public:
  explicit KsIntegrator(const KsParams& params);
  ~KsIntegrator();
  KsIntegrator(const KsIntegrator&) = delete;
  KsIntegrator& operator=(const KsIntegrator&) = delete;

  void set_state(std::span<const double> u);
  std::vector<double> state() const;
  // Advances one internal step; throws BlowUp on a non-finite field.
  void step();
  std::size_t steps_taken() const noexcept { return steps_; }

 private:
  using cplx = std::complex<double>;
  void nonlinear(const std::vector<cplx>& v, std::vector<cplx>& out) const;

  KsParams params_;
  std::size_t n_modes_;
  std::vector<cplx> v_;
  std::vector<double> e_, e2_, q_, f1_, f2_, f3_;
  std::vector<cplx> g_;
  std::vector<unsigned char> keep_;
  mutable std::vector<double> real_buf_;
  mutable std::vector<cplx> spec_buf_;
  void* plan_r2c_ = nullptr;
  void* plan_c2r_ = nullptr;
  std::size_t steps_ = 0;
};

// Smooth seeded initial condition cos(2 pi x / L) (1 + sin(2 pi x / L)),
// scaled by a factor in [0.5, 1.5] drawn from `seed`.
std::vector<double> ks_initial_condition(const KsParams& params, std::uint64_t seed);

TrajectoryDataset simulate_ks(const KsParams& params, std::uint64_t seed);
TrajectoryDataset simulate_ks(const KsParams& params, std::span<const double> initial);

enum class System { kLorenz, kKs };

System parse_system(const std::string& name);
const char* to_string(System system);

struct TimeScale {
  System system = System::kLorenz;
  double lyapunov_exponent = 0.0;
  double lt_model_units = 0.0;
  std::size_t lt_steps = 0;
};

inline constexpr double kLorenzLyapunov = 0.906;
inline constexpr double kKsLyapunov = 0.043;

TimeScale time_scale(System system, double dataset_dt);

// Default recursive-forecast horizon: 10 LT for Lorenz, 3 LT for KS.
std::size_t rollout_preset_steps(System system, double dataset_dt);

}  // namespace dynerr
