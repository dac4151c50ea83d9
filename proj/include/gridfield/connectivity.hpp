#pragma once

#include <array>
#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace gridfield {

/// Periodic n x n discretisation of the neural sheet [-0.5, 0.5)^2.
///
/// Cell i has centre (i - n/2) dx, so the origin is the centre of cell n/2
/// and shifting by whole cells is an exact cyclic permutation. Fields on the
/// grid are stored x-major: index = ix * n + iy.
struct TorusGrid {
  int n = 64;

  explicit TorusGrid(int cells);

  double dx() const noexcept { return 1.0 / n; }
  double center(int i) const noexcept { return (i - n / 2) * dx(); }
  std::size_t cells() const noexcept { return static_cast<std::size_t>(n) * n; }
  std::size_t index(int ix, int iy) const noexcept {
    return static_cast<std::size_t>(ix) * n + static_cast<std::size_t>(iy);
  }
  int wrap(int i) const noexcept { return ((i % n) + n) % n; }
};

/// W(|x|) = -A (1 + tanh(a - b|x|)).
struct KernelParams {
  double amplitude = 0.005 * 128.0 * 128.0;
  double offset = 10.0;
  double steepness = 50.0;
};

/// Lattice Fourier coefficients W^(k) for k = 2 pi (k1, k2), |k1|, |k2| <= k_max.
class SpectralTable {
 public:
  SpectralTable() = default;
  SpectralTable(int k_max, std::vector<double> values);

  int k_max() const noexcept { return k_max_; }
  double at(int k1, int k2) const;

 private:
  int k_max_ = 0;
  std::vector<double> values_;
};

class Kernel {
 public:
  /// Wraps arbitrary even samples (x-major, centred layout). Computes W0 and
  /// the spectral table; throws if the samples are not even enough for the
  /// transform to be real.
  Kernel(TorusGrid grid, std::vector<double> samples, int k_max = 10);

  const TorusGrid& grid() const noexcept { return grid_; }
  std::span<const double> samples() const noexcept { return samples_; }
  double sample(int ix, int iy) const noexcept { return samples_[grid_.index(ix, iy)]; }
  double w0() const noexcept { return w0_; }
  const SpectralTable& spectral() const noexcept { return spectral_; }
  const KernelParams* params() const noexcept { return has_params_ ? &params_ : nullptr; }

  /// Full n x n table of W^(k) (real parts), indexed by (k1 mod n, k2 mod n).
  std::span<const double> full_spectrum() const noexcept { return full_spectrum_; }
  double spectrum_mod(int k1, int k2) const noexcept {
    return full_spectrum_[grid_.index(grid_.wrap(k1), grid_.wrap(k2))];
  }

 private:
  friend Kernel sample_kernel(const TorusGrid&, const KernelParams&, int);

  TorusGrid grid_;
  std::vector<double> samples_;
  std::vector<double> full_spectrum_;
  double w0_ = 0.0;
  SpectralTable spectral_;
  KernelParams params_{};
  bool has_params_ = false;
};

/// Samples -A (1 + tanh(a - b rho)) at every cell, rho the torus distance of
/// the cell centre from the origin. Rejects kernels that are still non-negligible
/// at rho = 0.5, where the minimum image becomes ambiguous.
Kernel sample_kernel(const TorusGrid& grid, const KernelParams& params, int k_max = 10);

/// W^(k) = sum_cells W(x) exp(-i k.x) dx^2 for |k1|, |k2| <= k_max. Imaginary
/// parts above 1e-10 max|W^| are an error.
SpectralTable spectral_transform(const TorusGrid& grid, std::span<const double> samples, int k_max);

/// Orientation shifts r^beta = z e_beta, z = z_cells dx. Order: north, west,
/// south, east.
struct ShiftSet {
  int z_cells = 1;

  double z(const TorusGrid& grid) const noexcept { return z_cells * grid.dx(); }
  static constexpr std::array<std::array<int, 2>, 4> directions{{{0, 1}, {-1, 0}, {0, -1}, {1, 0}}};
};

/// sum_beta exp(-i k.r^beta) for k = 2 pi (k1, k2): 2 cos(2 pi k1 z) + 2 cos(2 pi k2 z).
double shift_factor(double k1, double k2, double z) noexcept;

/// Periodic FFT convolution against a fixed kernel. Owns its FFTW plans and
/// work buffers; use one instance per thread.
class PeriodicConvolver {
 public:
  explicit PeriodicConvolver(const Kernel& kernel);
  ~PeriodicConvolver();
  PeriodicConvolver(PeriodicConvolver&&) noexcept;
  PeriodicConvolver& operator=(PeriodicConvolver&&) noexcept;
  PeriodicConvolver(const PeriodicConvolver&) = delete;
  PeriodicConvolver& operator=(const PeriodicConvolver&) = delete;

  const TorusGrid& grid() const noexcept;

  /// out(x) = sum_y W(x - y) field(y) dx^2.
  void convolve(std::span<const double> field, std::span<double> out);

  /// out(x) = 1/4 sum_beta sum_y W(x - y - r^beta) means_beta(y) dx^2, done as
  /// one convolution of the cyclically pre-shifted sum of the four fields.
  void convolve_means(const std::array<std::span<const double>, 4>& means, const ShiftSet& shifts,
                      std::span<double> out);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Sum of the four mean fields, each translated by its shift r^beta.
void shifted_sum(const TorusGrid& grid, const std::array<std::span<const double>, 4>& means,
                 const ShiftSet& shifts, std::span<double> out);

std::vector<double> convolve_means(const Kernel& kernel, const ShiftSet& shifts,
                                   const std::array<std::vector<double>, 4>& means);

}  // namespace gridfield
