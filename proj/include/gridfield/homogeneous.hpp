#pragma once

#include <span>
#include <vector>

#include "gridfield/activation.hpp"

namespace gridfield {

/// Uniform cell-centred grid on the activity interval [0, s_max].
struct SGrid {
  int n_s = 64;
  double s_max = 1.3;

  SGrid(int cells, double upper);

  double ds() const noexcept { return s_max / n_s; }
  double center(int j) const noexcept { return (j + 0.5) * ds(); }
  double interface(int j) const noexcept { return (j + 1) * ds(); }  // between j and j+1
  int cell_of(double s) const noexcept;
};

/// Spatially homogeneous stationary state: the Gaussian with centre phi0 and
/// variance sigma restricted to s >= 0, with self-consistent mean
/// m = <f> and phi0 = Phi(W0 m + B).
struct HomogeneousState {
  double sigma = 0.0;
  double w0 = 0.0;
  double b = 0.0;
  double phi0 = 0.0;
  double mean = 0.0;
  double Z = 0.0;
  double log_z = 0.0;  // log Z; Z itself underflows when phi0 << -sqrt(sigma)
  double m_inf = 0.0;
  double residual = 0.0;
};

/// Scaled complementary error function exp(x^2) erfc(x).
double erfcx(double x);

/// 1 - (2/sqrt(pi)) r (r/sqrt(pi) + eta), r = exp(-eta^2) / (1 + erf(eta)).
/// Equals M_inf / sigma of the truncated Gaussian with eta = phi0 / sqrt(2 sigma).
double g_eta(double eta);

/// Mean of the truncated Gaussian with centre phi and variance sigma.
double truncated_mean(double phi, double sigma);

double density_at(const HomogeneousState& state, double s);

/// G(m, sigma) = Phi(W0 m + B) + sigma exp(-Phi^2 / 2 sigma) / Z - m.
double consistency_residual(double m, double sigma, const Activation& activation, double w0, double b);

/// Unique root of G(., sigma) by bisection on [0, max(Phi(B), 0) + sqrt(2 sigma / pi)]
/// followed by a Newton polish. Throws std::domain_error when the slope
/// hypothesis Phi'(W0 m + B) > 1/W0 fails on the bracket, std::runtime_error
/// when the bracket has no sign change or the root misses tol.
HomogeneousState solve_stationary(const Activation& activation, double w0, double b, double sigma,
                                  double tol = 1e-12);

/// Closed form sigma g(phi0 / sqrt(2 sigma)).
double m_infinity(const HomogeneousState& state);

/// Adaptive Gauss-Kronrod value of int (s - mean)^2 f_inf(s) ds.
double m_infinity_quadrature(const HomogeneousState& state);

/// Adaptive Gauss-Kronrod value of int f_inf(s) ds over [0, upper].
double mass_quadrature(const HomogeneousState& state, double upper);

/// Zero-noise fixed point m = Phi(W0 m + B).
double zero_noise_mean(const Activation& activation, double w0, double b);

/// Same consistency problem with every moment taken by the midpoint rule on
/// an activity grid: the stationary state of the discrete Fokker-Planck scheme.
struct DiscreteStationary {
  HomogeneousState state;
  std::vector<double> density;  // cell values, sum density * ds = 1
};
DiscreteStationary solve_stationary_on_grid(const Activation& activation, double w0, double b,
                                            double sigma, const SGrid& grid, double tol = 1e-13);

/// Discrete Gibbs column exp(-(s_j - phi)^2 / 2 sigma), normalised to unit
/// mass: the zero-flux profile of the scheme for a frozen rate phi.
std::vector<double> gibbs_column(double phi, double sigma, const SGrid& grid);

/// Cell-centre samples of f_inf on the grid (not renormalised).
std::vector<double> sample_density(const HomogeneousState& state, const SGrid& grid);

}  // namespace gridfield
