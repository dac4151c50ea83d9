#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gridfield/activation.hpp"
#include "gridfield/connectivity.hpp"
#include "gridfield/homogeneous.hpp"
#include "gridfield/trajectory.hpp"

namespace gridfield {

/// Raised for negative or non-finite densities and impossible time steps.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SolverParams {
  double tau = 10.0;  // ms
  double sigma = 0.01;
  double B = 3.0;
  double alpha = 0.0;
  double cfl = 0.9;
  double t_min = 2000.0;
  double t_max = 6000.0;
  double stop_tol = 1e-8;

  void validate() const;
};

/// Cell averages f[beta][ix][iy][j] of the four densities, row-major in that
/// order, with the simulation clock.
class FieldState {
 public:
  FieldState(TorusGrid grid, SGrid sgrid);

  const TorusGrid& grid() const noexcept { return grid_; }
  const SGrid& sgrid() const noexcept { return sgrid_; }
  std::size_t columns() const noexcept { return 4 * grid_.cells(); }
  std::size_t column_offset(int beta, int ix, int iy) const noexcept {
    return ((static_cast<std::size_t>(beta) * grid_.n + ix) * grid_.n + iy) * sgrid_.n_s;
  }

  std::span<const double> data() const noexcept { return f_; }
  /// Mutable access; invalidates anything cached against the previous contents.
  std::span<double> mutable_data() noexcept {
    ++revision_;
    return f_;
  }
  std::span<const double> column(int beta, int ix, int iy) const noexcept {
    return {f_.data() + column_offset(beta, ix, iy), static_cast<std::size_t>(sgrid_.n_s)};
  }
  std::span<double> mutable_column(int beta, int ix, int iy) noexcept {
    ++revision_;
    return {f_.data() + column_offset(beta, ix, iy), static_cast<std::size_t>(sgrid_.n_s)};
  }
  std::uint64_t revision() const noexcept { return revision_; }

  double column_mass(int beta, int ix, int iy) const noexcept;

  double t = 0.0;

 private:
  friend class FokkerPlanckSolver;
  TorusGrid grid_;
  SGrid sgrid_;
  std::vector<double> f_;
  std::uint64_t revision_ = 0;
};

/// Every column set to the same s-profile.
FieldState uniform_state(const TorusGrid& grid, const SGrid& sgrid, std::span<const double> density);

/// Delta initial data: in each population round(fraction n^2) distinct cells
/// get unit mass in the s-cell containing s_active, all others in the s-cell
/// containing 0.
FieldState random_delta_state(const TorusGrid& grid, const SGrid& sgrid, double fraction, std::uint64_t seed,
                              double s_active = 1.0);

struct MeanFields {
  std::array<std::vector<double>, 4> beta;  // <f^beta>(x), midpoint rule in s
  std::vector<double> total;                // sum over beta
};
MeanFields mean_activity(const FieldState& state);

/// B^beta = B + alpha v . e_beta, e_beta the unit vector at theta^beta
/// (pi/2, pi, 3pi/2, 2pi), v the trajectory velocity in cm/ms.
std::array<double, 4> external_input(double t, const Trajectory& trajectory, double alpha, double B);
inline std::array<double, 4> constant_input(double B) { return {B, B, B, B}; }

struct StepInfo {
  double dt = 0.0;
  double derivative = std::numeric_limits<double>::quiet_NaN();  // ||d/dt sum_beta f||_L1 when tracked
  double phi_min = 0.0;
  double phi_max = 0.0;
};

struct StationaryReport {
  double final_time = 0.0;
  double derivative = 0.0;
  std::string stop_reason;  // "stationary" or "max-time"
  std::size_t steps = 0;
};

using InputFunction = std::function<std::array<double, 4>(double t)>;
using StepObserver = std::function<void(const FieldState&, const StepInfo&)>;

/// Explicit first-order finite-volume solver for the four coupled
/// Fokker-Planck equations in s, one column per (beta, x).
///
/// The interface flux is the exponentially fitted (Scharfetter-Gummel) form
/// of drift (Phi - s) plus diffusion sigma, which is exact for the local
/// Gibbs profile, so discrete truncated Gaussians are steady states to
/// rounding. No-flux at s = 0 and s = s_max. Phi is evaluated once per step
/// from the convolution of the current means (explicit coupling).
class FokkerPlanckSolver {
 public:
  FokkerPlanckSolver(const Kernel& kernel, ShiftSet shifts, Activation activation, SolverParams params,
                     int threads = 1);
  ~FokkerPlanckSolver();
  FokkerPlanckSolver(FokkerPlanckSolver&&) noexcept;
  FokkerPlanckSolver& operator=(FokkerPlanckSolver&&) noexcept;

  const SolverParams& params() const noexcept;
  void set_sigma(double sigma);
  const Activation& activation() const noexcept;
  const Kernel& kernel() const noexcept;
  const ShiftSet& shifts() const noexcept;

  /// Argument of Phi per population: 1/4 sum W^beta' * <f^beta'> + B^beta.
  std::array<std::vector<double>, 4> firing_argument(const FieldState& state, const std::array<double, 4>& b_beta);

  /// Largest stable step for the given range of Phi values.
  double stable_dt(double phi_min, double phi_max, const SGrid& sgrid) const;

  /// One forward-Euler step of length min(CFL step, dt_cap).
  StepInfo step(FieldState& state, const std::array<double, 4>& b_beta,
                double dt_cap = std::numeric_limits<double>::infinity(), bool track_derivative = false);

  /// Steps until t >= t_end exactly (the last step is clipped).
  std::size_t advance(FieldState& state, double t_end, const InputFunction& input,
                      const StepObserver& observer = {});

  /// Constant input B; stops once t >= t_min and the derivative is below
  /// stop_tol, or at t_max.
  StationaryReport run_to_stationary(FieldState& state, const StepObserver& observer = {});

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// The single-column problem with all-to-all coupling: arg = W0 <f> + B.
class HomogeneousSolver1D {
 public:
  HomogeneousSolver1D(SGrid sgrid, Activation activation, double w0, SolverParams params);
  ~HomogeneousSolver1D();
  HomogeneousSolver1D(HomogeneousSolver1D&&) noexcept;
  HomogeneousSolver1D& operator=(HomogeneousSolver1D&&) noexcept;

  const SGrid& sgrid() const noexcept;
  std::span<const double> density() const noexcept;
  void set_density(std::span<const double> f);
  double t() const noexcept;
  void set_time(double t) noexcept;
  double mean() const noexcept;

  StepInfo step(double dt_cap = std::numeric_limits<double>::infinity());
  void advance(double t_end);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Binary dump: "GCNF1", five little-endian uint32 (4, n, n, n_s, 0), the
/// densities as little-endian float64 in (beta, x, y, s) order, then t.
void write_state(const std::filesystem::path& path, const FieldState& state);
/// s_max is not stored in the dump and must be supplied.
FieldState read_state(const std::filesystem::path& path, double s_max = 1.3);

/// CSV beta,ix,iy,x,y,f of f(., ., s*) for all four populations, s* mapped to
/// the cell that contains it.
void write_slice_csv(const std::filesystem::path& path, const FieldState& state, double s_star);

}  // namespace gridfield
