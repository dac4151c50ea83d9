#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "gridfield/activation.hpp"
#include "gridfield/connectivity.hpp"
#include "gridfield/homogeneous.hpp"

namespace gridfield {

struct DispersionEntry {
  int k1 = 0;
  int k2 = 0;
  double w_hat = 0.0;
  double shift = 0.0;
  double F = 0.0;
};

/// F(k) = 1/4 Phi0' W^(k) sum_beta exp(-i k.r^beta) over |k1|, |k2| <= k_max.
struct DispersionTable {
  std::vector<DispersionEntry> entries;
  double sigma = 0.0;
  double phi0_prime = 0.0;
  double m_inf_over_sigma = 1.0;  // 1 in the zero-noise case
  int k_max = 0;

  const DispersionEntry& at(int k1, int k2) const;
  const DispersionEntry& worst() const;
  double max_F() const { return worst().F; }
};

/// Table at a solved homogeneous state; Phi0' = Phi'(W0 <f_inf> + B).
DispersionTable dispersion(const Kernel& kernel, const ShiftSet& shifts, const HomogeneousState& hom,
                           const Activation& activation, int k_max = 10);

/// Table for a given amplification Phi0' (zero-noise limit or frozen slope).
DispersionTable dispersion_with_slope(const Kernel& kernel, const ShiftSet& shifts, double phi0_prime,
                                      int k_max = 10);

/// All maximisers of F in the closed positive quadrant k1, k2 >= 0, ties
/// within relative tolerance rel_tol.
std::vector<DispersionEntry> dominant_modes(const DispersionTable& table, double rel_tol = 1e-6);

struct StabilityVerdict {
  bool stable = false;
  DispersionEntry worst;
};

/// Stable iff max_k F(k) < 1 (strict).
StabilityVerdict zero_noise_stable(const DispersionTable& table);

/// (F - 1) / tau.
double linearized_growth_rate(double F, double tau);

/// max_k F(k; sigma) M_inf(sigma) / sigma - 1; negative means linearly stable.
double noisy_stability_indicator(const Kernel& kernel, const ShiftSet& shifts, const Activation& activation,
                                 double b, double sigma, int k_max = 10);

class NoCrossingError : public std::runtime_error {
 public:
  NoCrossingError(const std::string& what, std::vector<double> crossings)
      : std::runtime_error(what), crossings_(std::move(crossings)) {}
  const std::vector<double>& crossings() const noexcept { return crossings_; }

 private:
  std::vector<double> crossings_;
};

struct CriticalSigmaOptions {
  int scan_points = 200;
  int k_max = 10;
  double tol = 1e-7;
};

/// sigma_c where the noisy indicator changes sign, by a uniform scan of the
/// range then bisection. Throws NoCrossingError for zero or several crossings.
double critical_sigma(const Kernel& kernel, const ShiftSet& shifts, const Activation& activation, double b,
                      double sigma_lo, double sigma_hi, const CriticalSigmaOptions& options = {});

/// Zero-noise analogue: smallest sigma where max_k F(k; sigma) drops below 1
/// (no M_inf/sigma factor), by the same scan-then-bisect.
double zero_noise_threshold_sigma(const Kernel& kernel, const ShiftSet& shifts, const Activation& activation,
                                  double b, double sigma_lo, double sigma_hi,
                                  const CriticalSigmaOptions& options = {});

struct LatticeMode {
  int k1 = 0;
  int k2 = 0;
};

/// sum_i w_i cos(2 pi (k1 x + k2 y)) sampled at the cell centres.
std::vector<double> mode_pattern(const TorusGrid& grid, std::span<const LatticeMode> modes,
                                 std::span<const double> weights);

}  // namespace gridfield
