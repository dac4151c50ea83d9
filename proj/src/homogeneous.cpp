#include "gridfield/homogeneous.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace gridfield {

namespace {

constexpr double kSqrtPi = 1.7724538509055160273;

struct MeanAndVariance {
  double mean;
  double variance;
};

// Root of m -> mean(Phi(W0 m + B)) - m. `law` maps a centre phi to the mean
// and variance of the stationary law with that centre.
struct FixedPoint {
  double m;
  double phi;
  double residual;
};

FixedPoint solve_fixed_point(const Activation& activation, double w0, double b, double sigma, double tol,
                             const std::function<MeanAndVariance(double)>& law) {
  if (!(sigma > 0.0)) throw std::invalid_argument("solve_stationary: sigma must be positive");
  if (w0 > 0.0) throw std::invalid_argument("solve_stationary: W0 must be <= 0 (inhibitory kernel)");

  auto residual = [&](double m) { return law(activation(w0 * m + b)).mean - m; };

  double lo = 0.0;
  // m <= mean of the law at Phi(B) since W0 <= 0; on coarse grids the
  // midpoint-rule mean can exceed the continuous bound Phi(B) + sqrt(2 sigma / pi).
  double hi = std::max(std::max(activation(b), 0.0) + std::sqrt(2.0 * sigma / std::numbers::pi),
                       law(activation(b)).mean);
  hi += 1e-9 + 1e-9 * hi;

  if (w0 < 0.0) {
    const int samples = 2001;
    for (int i = 0; i < samples; ++i) {
      const double m = hi * i / (samples - 1);
      if (!(activation.derivative(w0 * m + b) > 1.0 / w0))
        throw std::domain_error("solve_stationary: activation violates Phi'(W0 m + B) > 1/W0 at m = " +
                                std::to_string(m));
    }
  }

  double g_lo = residual(lo);
  double g_hi = residual(hi);
  if (!(g_lo > 0.0) || !(g_hi < 0.0))
    throw std::runtime_error("solve_stationary: bracket [0, " + std::to_string(hi) +
                             "] has no sign change (G(0) = " + std::to_string(g_lo) +
                             ", G(hi) = " + std::to_string(g_hi) + ")");

  while (hi - lo > 1e-14 * std::max(1.0, hi)) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    const double g_mid = residual(mid);
    if (g_mid > 0.0) lo = mid;
    else hi = mid;
  }

  double m = 0.5 * (lo + hi);
  double best = residual(m);
  for (int it = 0; it < 3; ++it) {
    const double x = w0 * m + b;
    const auto stats = law(activation(x));
    const double slope = -1.0 + activation.derivative(x) * w0 * stats.variance / sigma;
    if (slope == 0.0 || !std::isfinite(slope)) break;
    const double candidate = m - best / slope;
    if (!(candidate >= 0.0)) break;
    const double r = residual(candidate);
    if (!(std::abs(r) < std::abs(best))) break;
    m = candidate;
    best = r;
  }
  if (!(std::abs(best) <= tol))
    throw std::runtime_error("solve_stationary: bisection stalled with |G| = " + std::to_string(std::abs(best)));
  return {m, activation(w0 * m + b), best};
}

MeanAndVariance continuous_law(double phi, double sigma) {
  return {truncated_mean(phi, sigma), sigma * g_eta(phi / std::sqrt(2.0 * sigma))};
}

// Log of the relative Gibbs weights on the grid, shifted so the largest is 0.
void grid_log_weights(double phi, double sigma, const SGrid& grid, std::vector<double>& logw) {
  logw.resize(static_cast<std::size_t>(grid.n_s));
  double top = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < grid.n_s; ++j) {
    const double d = grid.center(j) - phi;
    logw[j] = -d * d / (2.0 * sigma);
    top = std::max(top, logw[j]);
  }
  for (double& v : logw) v -= top;
}

MeanAndVariance grid_law(double phi, double sigma, const SGrid& grid) {
  std::vector<double> logw;
  grid_log_weights(phi, sigma, grid, logw);
  double w_sum = 0.0, s_sum = 0.0, s2_sum = 0.0;
  for (int j = 0; j < grid.n_s; ++j) {
    const double w = std::exp(logw[j]);
    const double s = grid.center(j);
    w_sum += w;
    s_sum += w * s;
    s2_sum += w * s * s;
  }
  const double mean = s_sum / w_sum;
  return {mean, std::max(0.0, s2_sum / w_sum - mean * mean)};
}

}  // namespace

SGrid::SGrid(int cells, double upper) : n_s(cells), s_max(upper) {
  if (cells < 2) throw std::invalid_argument("grid.n_s must be >= 2");
  if (!(upper > 0.0)) throw std::invalid_argument("grid.s_max must be positive");
}

int SGrid::cell_of(double s) const noexcept {
  const int j = static_cast<int>(std::floor(s / ds()));
  return std::clamp(j, 0, n_s - 1);
}

double erfcx(double x) {
  if (x < 0.0) {
    if (x < -26.6) return std::numeric_limits<double>::infinity();
    return 2.0 * std::exp(x * x) - erfcx(-x);
  }
  if (x < 5.0) return std::exp(x * x) * std::erfc(x);
  // Continued fraction erfc(x) = exp(-x^2)/sqrt(pi) * 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + ...)))).
  double t = x;
  for (int k = 60; k >= 1; --k) t = x + 0.5 * k / t;
  return 1.0 / (kSqrtPi * t);
}

double g_eta(double eta) {
  // exp(-eta^2) / (1 + erf(eta)) = 1 / erfcx(-eta), which stays finite for eta -> -inf.
  const double r = 1.0 / erfcx(-eta);
  return 1.0 - (2.0 / kSqrtPi) * r * (r / kSqrtPi + eta);
}

double truncated_mean(double phi, double sigma) {
  const double eta = phi / std::sqrt(2.0 * sigma);
  return phi + std::sqrt(2.0 * sigma / std::numbers::pi) / erfcx(-eta);
}

double density_at(const HomogeneousState& state, double s) {
  const double d = s - state.phi0;
  return std::exp(-d * d / (2.0 * state.sigma) - state.log_z);
}

double consistency_residual(double m, double sigma, const Activation& activation, double w0, double b) {
  return truncated_mean(activation(w0 * m + b), sigma) - m;
}

HomogeneousState solve_stationary(const Activation& activation, double w0, double b, double sigma, double tol) {
  const auto root = solve_fixed_point(activation, w0, b, sigma, tol,
                                      [sigma](double phi) { return continuous_law(phi, sigma); });
  HomogeneousState st;
  st.sigma = sigma;
  st.w0 = w0;
  st.b = b;
  st.phi0 = root.phi;
  st.mean = root.m;
  st.residual = root.residual;
  const double eta = root.phi / std::sqrt(2.0 * sigma);
  // Z = sqrt(pi sigma / 2) (1 + erf(eta)) = sqrt(pi sigma / 2) erfcx(-eta) exp(-eta^2).
  st.log_z = 0.5 * std::log(std::numbers::pi * sigma / 2.0) + std::log(erfcx(-eta)) - eta * eta;
  st.Z = std::exp(st.log_z);
  st.m_inf = m_infinity(st);
  return st;
}

double m_infinity(const HomogeneousState& state) {
  return state.sigma * g_eta(state.phi0 / std::sqrt(2.0 * state.sigma));
}

namespace {
// Integration window holding all but ~exp(-800) of the mass.
std::pair<double, double> support_window(const HomogeneousState& state) {
  const double width = 40.0 * std::sqrt(state.sigma);
  return {std::max(0.0, state.phi0 - width), std::max(state.phi0 + width, width)};
}
}  // namespace

double m_infinity_quadrature(const HomogeneousState& state) {
  using boost::math::quadrature::gauss_kronrod;
  const auto [a, b] = support_window(state);
  const double mean = state.mean;
  auto integrand = [&](double s) { return (s - mean) * (s - mean) * density_at(state, s); };
  return gauss_kronrod<double, 61>::integrate(integrand, a, b, 20, 1e-14);
}

double mass_quadrature(const HomogeneousState& state, double upper) {
  using boost::math::quadrature::gauss_kronrod;
  const auto [a, b] = support_window(state);
  auto integrand = [&](double s) { return density_at(state, s); };
  return gauss_kronrod<double, 61>::integrate(integrand, a, std::min(b, upper), 20, 1e-14);
}

double zero_noise_mean(const Activation& activation, double w0, double b) {
  if (w0 > 0.0) throw std::invalid_argument("zero_noise_mean: W0 must be <= 0");
  auto h = [&](double m) { return activation(w0 * m + b) - m; };
  double lo = 0.0;
  double hi = std::max(activation(b), 0.0) + 1.0;
  if (h(lo) < 0.0 || h(hi) > 0.0) throw std::runtime_error("zero_noise_mean: no sign change on bracket");
  if (h(lo) == 0.0) return 0.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (h(mid) > 0.0) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<double> gibbs_column(double phi, double sigma, const SGrid& grid) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gibbs_column: sigma must be positive");
  std::vector<double> logw;
  grid_log_weights(phi, sigma, grid, logw);
  std::vector<double> f(logw.size());
  double mass = 0.0;
  for (std::size_t j = 0; j < f.size(); ++j) {
    f[j] = std::exp(logw[j]);
    mass += f[j] * grid.ds();
  }
  for (double& v : f) v /= mass;
  return f;
}

DiscreteStationary solve_stationary_on_grid(const Activation& activation, double w0, double b, double sigma,
                                            const SGrid& grid, double tol) {
  const auto root = solve_fixed_point(activation, w0, b, sigma, tol,
                                      [sigma, &grid](double phi) { return grid_law(phi, sigma, grid); });
  DiscreteStationary out;
  auto& st = out.state;
  st.sigma = sigma;
  st.w0 = w0;
  st.b = b;
  st.phi0 = root.phi;
  st.mean = root.m;
  st.residual = root.residual;

  std::vector<double> logw;
  grid_log_weights(root.phi, sigma, grid, logw);
  double mass = 0.0;
  for (double v : logw) mass += std::exp(v) * grid.ds();
  out.density = gibbs_column(root.phi, sigma, grid);

  // Z relative to the unshifted weights exp(-(s - phi)^2 / 2 sigma).
  double top = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < grid.n_s; ++j) {
    const double d = grid.center(j) - root.phi;
    top = std::max(top, -d * d / (2.0 * sigma));
  }
  st.log_z = std::log(mass) + top;
  st.Z = std::exp(st.log_z);

  double var = 0.0;
  for (int j = 0; j < grid.n_s; ++j) {
    const double d = grid.center(j) - st.mean;
    var += d * d * out.density[j] * grid.ds();
  }
  st.m_inf = var;
  return out;
}

std::vector<double> sample_density(const HomogeneousState& state, const SGrid& grid) {
  std::vector<double> out(static_cast<std::size_t>(grid.n_s));
  for (int j = 0; j < grid.n_s; ++j) out[j] = density_at(state, grid.center(j));
  return out;
}

}  // namespace gridfield
