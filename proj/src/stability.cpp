#include "gridfield/stability.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <sstream>

namespace gridfield {

const DispersionEntry& DispersionTable::at(int k1, int k2) const {
  if (std::abs(k1) > k_max || std::abs(k2) > k_max) throw std::out_of_range("dispersion: mode outside k_max");
  const int side = 2 * k_max + 1;
  return entries[static_cast<std::size_t>(k1 + k_max) * side + (k2 + k_max)];
}

const DispersionEntry& DispersionTable::worst() const {
  if (entries.empty()) throw std::logic_error("dispersion table is empty");
  return *std::max_element(entries.begin(), entries.end(),
                           [](const auto& a, const auto& b) { return a.F < b.F; });
}

DispersionTable dispersion_with_slope(const Kernel& kernel, const ShiftSet& shifts, double phi0_prime,
                                      int k_max) {
  const auto& spectral = kernel.spectral();
  if (k_max > spectral.k_max()) throw std::invalid_argument("dispersion: k_max exceeds the kernel's spectral table");
  DispersionTable table;
  table.phi0_prime = phi0_prime;
  table.k_max = k_max;
  const double z = shifts.z(kernel.grid());
  table.entries.reserve(static_cast<std::size_t>(2 * k_max + 1) * (2 * k_max + 1));
  for (int k1 = -k_max; k1 <= k_max; ++k1) {
    for (int k2 = -k_max; k2 <= k_max; ++k2) {
      DispersionEntry e;
      e.k1 = k1;
      e.k2 = k2;
      e.w_hat = spectral.at(k1, k2);
      e.shift = shift_factor(k1, k2, z);
      e.F = 0.25 * phi0_prime * e.w_hat * e.shift;
      table.entries.push_back(e);
    }
  }
  return table;
}

DispersionTable dispersion(const Kernel& kernel, const ShiftSet& shifts, const HomogeneousState& hom,
                           const Activation& activation, int k_max) {
  auto table = dispersion_with_slope(kernel, shifts, activation.derivative(hom.w0 * hom.mean + hom.b), k_max);
  table.sigma = hom.sigma;
  table.m_inf_over_sigma = hom.sigma > 0.0 ? hom.m_inf / hom.sigma : 1.0;
  return table;
}

std::vector<DispersionEntry> dominant_modes(const DispersionTable& table, double rel_tol) {
  double top = -std::numeric_limits<double>::infinity();
  for (const auto& e : table.entries)
    if (e.k1 >= 0 && e.k2 >= 0) top = std::max(top, e.F);
  std::vector<DispersionEntry> out;
  for (const auto& e : table.entries)
    if (e.k1 >= 0 && e.k2 >= 0 && std::abs(e.F - top) <= rel_tol * std::abs(top)) out.push_back(e);
  return out;
}

StabilityVerdict zero_noise_stable(const DispersionTable& table) {
  const auto& w = table.worst();
  return {w.F < 1.0, w};
}

double linearized_growth_rate(double F, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("linearized_growth_rate: tau must be positive");
  return (F - 1.0) / tau;
}

double noisy_stability_indicator(const Kernel& kernel, const ShiftSet& shifts, const Activation& activation,
                                 double b, double sigma, int k_max) {
  const auto hom = solve_stationary(activation, kernel.w0(), b, sigma);
  const auto table = dispersion(kernel, shifts, hom, activation, k_max);
  return table.max_F() * table.m_inf_over_sigma - 1.0;
}

namespace {

double scan_and_bisect(const std::function<double(double)>& indicator, double lo, double hi,
                       const CriticalSigmaOptions& options, const char* what) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument(std::string(what) + ": need 0 < sigma_lo < sigma_hi");
  const int points = std::max(options.scan_points, 2);
  std::vector<double> sigmas(points), values(points);
  for (int i = 0; i < points; ++i) {
    sigmas[i] = lo + (hi - lo) * i / (points - 1);
    values[i] = indicator(sigmas[i]);
  }
  std::vector<std::size_t> brackets;
  for (int i = 0; i + 1 < points; ++i)
    if ((values[i] > 0.0) != (values[i + 1] > 0.0)) brackets.push_back(static_cast<std::size_t>(i));
  if (brackets.size() != 1) {
    std::vector<double> crossings;
    std::ostringstream msg;
    msg << what << ": expected one crossing in [" << lo << ", " << hi << "], found " << brackets.size();
    for (auto i : brackets) {
      crossings.push_back(0.5 * (sigmas[i] + sigmas[i + 1]));
      msg << " ~" << crossings.back();
    }
    throw NoCrossingError(msg.str(), std::move(crossings));
  }
  double a = sigmas[brackets[0]];
  double c = sigmas[brackets[0] + 1];
  const bool a_positive = values[brackets[0]] > 0.0;
  while (c - a > options.tol) {
    const double mid = 0.5 * (a + c);
    if ((indicator(mid) > 0.0) == a_positive) a = mid;
    else c = mid;
  }
  return 0.5 * (a + c);
}

}  // namespace

double critical_sigma(const Kernel& kernel, const ShiftSet& shifts, const Activation& activation, double b,
                      double sigma_lo, double sigma_hi, const CriticalSigmaOptions& options) {
  return scan_and_bisect(
      [&](double sigma) { return noisy_stability_indicator(kernel, shifts, activation, b, sigma, options.k_max); },
      sigma_lo, sigma_hi, options, "critical_sigma");
}

double zero_noise_threshold_sigma(const Kernel& kernel, const ShiftSet& shifts, const Activation& activation,
                                  double b, double sigma_lo, double sigma_hi, const CriticalSigmaOptions& options) {
  return scan_and_bisect(
      [&](double sigma) {
        const auto hom = solve_stationary(activation, kernel.w0(), b, sigma);
        return dispersion(kernel, shifts, hom, activation, options.k_max).max_F() - 1.0;
      },
      sigma_lo, sigma_hi, options, "zero_noise_threshold_sigma");
}

std::vector<double> mode_pattern(const TorusGrid& grid, std::span<const LatticeMode> modes,
                                 std::span<const double> weights) {
  if (modes.size() != weights.size()) throw std::invalid_argument("mode_pattern: one weight per mode");
  std::vector<double> out(grid.cells(), 0.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t m = 0; m < modes.size(); ++m)
    for (int ix = 0; ix < grid.n; ++ix)
      for (int iy = 0; iy < grid.n; ++iy)
        out[grid.index(ix, iy)] +=
            weights[m] * std::cos(two_pi * (modes[m].k1 * grid.center(ix) + modes[m].k2 * grid.center(iy)));
  return out;
}

}  // namespace gridfield
