#include "gridfield/connectivity.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numbers>
#include <string>

namespace gridfield {

namespace {

// The FFTW planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwFree {
  void operator()(void* p) const noexcept { fftw_free(p); }
};
template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t count) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * count));
  if (p == nullptr) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

// Samples are stored centred (origin in cell n/2); the transforms want the
// origin in cell 0.
std::vector<double> origin_first(const TorusGrid& grid, std::span<const double> centred) {
  const int n = grid.n;
  std::vector<double> out(grid.cells());
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      out[grid.index(grid.wrap(ix - n / 2), grid.wrap(iy - n / 2))] = centred[grid.index(ix, iy)];
  return out;
}

// W(rho) = -A (1 + tanh(a - b rho)) written as -2A / (1 + exp(-2(a - b rho)))
// so the tail does not cancel.
double tanh_profile(const KernelParams& p, double rho) {
  const double u = p.offset - p.steepness * rho;
  return -2.0 * p.amplitude / (1.0 + std::exp(-2.0 * u));
}

std::vector<double> full_dft_real(const TorusGrid& grid, std::span<const double> centred,
                                  double* max_imag_ratio) {
  const int n = grid.n;
  const std::size_t cells = grid.cells();
  auto in = fftw_buffer<fftw_complex>(cells);
  auto out = fftw_buffer<fftw_complex>(cells);
  const auto shifted = origin_first(grid, centred);
  for (std::size_t i = 0; i < cells; ++i) {
    in[i][0] = shifted[i];
    in[i][1] = 0.0;
  }
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft_2d(n, n, in.get(), out.get(), FFTW_FORWARD, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  const double dx2 = grid.dx() * grid.dx();
  std::vector<double> re(cells);
  double max_abs = 0.0;
  double max_imag = 0.0;
  for (std::size_t i = 0; i < cells; ++i) {
    re[i] = out[i][0] * dx2;
    max_abs = std::max(max_abs, std::hypot(out[i][0], out[i][1]) * dx2);
    max_imag = std::max(max_imag, std::abs(out[i][1]) * dx2);
  }
  *max_imag_ratio = max_abs > 0.0 ? max_imag / max_abs : 0.0;
  return re;
}

SpectralTable table_from_full(const TorusGrid& grid, std::span<const double> full, int k_max) {
  if (k_max < 0 || k_max > grid.n / 2 - 1)
    throw std::invalid_argument("spectral_transform: k_max must lie in [0, n/2 - 1]");
  const int side = 2 * k_max + 1;
  std::vector<double> values(static_cast<std::size_t>(side) * side);
  for (int k1 = -k_max; k1 <= k_max; ++k1)
    for (int k2 = -k_max; k2 <= k_max; ++k2)
      values[static_cast<std::size_t>(k1 + k_max) * side + (k2 + k_max)] =
          full[grid.index(grid.wrap(k1), grid.wrap(k2))];
  return SpectralTable(k_max, std::move(values));
}

constexpr double kImagTolerance = 1e-10;

}  // namespace

TorusGrid::TorusGrid(int cells) : n(cells) {
  if (cells < 4 || cells % 2 != 0)
    throw std::invalid_argument("grid.n must be even and >= 4, got " + std::to_string(cells));
}

SpectralTable::SpectralTable(int k_max, std::vector<double> values)
    : k_max_(k_max), values_(std::move(values)) {}

double SpectralTable::at(int k1, int k2) const {
  if (std::abs(k1) > k_max_ || std::abs(k2) > k_max_)
    throw std::out_of_range("spectral table: mode outside k_max");
  const int side = 2 * k_max_ + 1;
  return values_[static_cast<std::size_t>(k1 + k_max_) * side + (k2 + k_max_)];
}

Kernel::Kernel(TorusGrid grid, std::vector<double> samples, int k_max)
    : grid_(grid), samples_(std::move(samples)) {
  if (samples_.size() != grid_.cells())
    throw std::invalid_argument("kernel: sample count does not match the grid");
  double max_imag_ratio = 0.0;
  full_spectrum_ = full_dft_real(grid_, samples_, &max_imag_ratio);
  if (max_imag_ratio > kImagTolerance)
    throw std::invalid_argument("kernel: transform is not real (kernel not even on the grid), |Im|/max = " +
                                std::to_string(max_imag_ratio));
  // W0 is the plain quadrature sum; it equals the zero mode up to rounding.
  double sum = 0.0;
  for (double w : samples_) sum += w;
  w0_ = sum * grid_.dx() * grid_.dx();
  full_spectrum_[0] = w0_;
  spectral_ = table_from_full(grid_, full_spectrum_, std::min(k_max, grid_.n / 2 - 1));
}

Kernel sample_kernel(const TorusGrid& grid, const KernelParams& params, int k_max) {
  if (!(params.amplitude > 0.0)) throw std::invalid_argument("kernel.A must be positive");
  if (!(params.steepness > 0.0)) throw std::invalid_argument("kernel.b must be positive");
  if (std::abs(tanh_profile(params, 0.5)) > 1e-12 * params.amplitude)
    throw std::invalid_argument("kernel support exceeds half the sheet (minimum image ambiguous)");
  const int n = grid.n;
  std::vector<double> samples(grid.cells());
  for (int ix = 0; ix < n; ++ix)
    for (int iy = 0; iy < n; ++iy)
      samples[grid.index(ix, iy)] = tanh_profile(params, std::hypot(grid.center(ix), grid.center(iy)));
  Kernel kernel(grid, std::move(samples), k_max);
  kernel.params_ = params;
  kernel.has_params_ = true;
  return kernel;
}

SpectralTable spectral_transform(const TorusGrid& grid, std::span<const double> samples, int k_max) {
  if (samples.size() != grid.cells())
    throw std::invalid_argument("spectral_transform: sample count does not match the grid");
  double max_imag_ratio = 0.0;
  const auto full = full_dft_real(grid, samples, &max_imag_ratio);
  if (max_imag_ratio > kImagTolerance)
    throw std::invalid_argument("spectral_transform: imaginary part above tolerance");
  return table_from_full(grid, full, k_max);
}

double shift_factor(double k1, double k2, double z) noexcept {
  const double two_pi = 2.0 * std::numbers::pi;
  return 2.0 * std::cos(two_pi * k1 * z) + 2.0 * std::cos(two_pi * k2 * z);
}

void shifted_sum(const TorusGrid& grid, const std::array<std::span<const double>, 4>& means,
                 const ShiftSet& shifts, std::span<double> out) {
  const int n = grid.n;
  std::fill(out.begin(), out.end(), 0.0);
  for (int beta = 0; beta < 4; ++beta) {
    const int sx = shifts.z_cells * ShiftSet::directions[beta][0];
    const int sy = shifts.z_cells * ShiftSet::directions[beta][1];
    const auto m = means[beta];
    for (int ix = 0; ix < n; ++ix) {
      const int src_x = grid.wrap(ix - sx);
      for (int iy = 0; iy < n; ++iy) out[grid.index(ix, iy)] += m[grid.index(src_x, grid.wrap(iy - sy))];
    }
  }
}

struct PeriodicConvolver::Impl {
  TorusGrid grid;
  std::size_t spectral_size;
  FftwBuffer<double> real;
  FftwBuffer<fftw_complex> spec;
  std::vector<std::complex<double>> kernel_hat;
  std::vector<double> scratch;
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;

  explicit Impl(const Kernel& kernel)
      : grid(kernel.grid()),
        spectral_size(static_cast<std::size_t>(grid.n) * (grid.n / 2 + 1)),
        real(fftw_buffer<double>(grid.cells())),
        spec(fftw_buffer<fftw_complex>(spectral_size)),
        kernel_hat(spectral_size),
        scratch(grid.cells()) {
    const int n = grid.n;
    {
      std::lock_guard lock(planner_mutex());
      forward = fftw_plan_dft_r2c_2d(n, n, real.get(), spec.get(), FFTW_ESTIMATE);
      backward = fftw_plan_dft_c2r_2d(n, n, spec.get(), real.get(), FFTW_ESTIMATE);
    }
    const auto shifted = origin_first(grid, kernel.samples());
    std::copy(shifted.begin(), shifted.end(), real.get());
    fftw_execute(forward);
    // dx^2 for the quadrature, 1/n^2 for the unnormalised inverse.
    const double scale = grid.dx() * grid.dx() / static_cast<double>(grid.cells());
    for (std::size_t i = 0; i < spectral_size; ++i)
      kernel_hat[i] = std::complex<double>(spec[i][0], spec[i][1]) * scale;
  }

  ~Impl() {
    std::lock_guard lock(planner_mutex());
    if (forward) fftw_destroy_plan(forward);
    if (backward) fftw_destroy_plan(backward);
  }

  void run(std::span<const double> field, std::span<double> out) {
    std::copy(field.begin(), field.end(), real.get());
    fftw_execute(forward);
    for (std::size_t i = 0; i < spectral_size; ++i) {
      const std::complex<double> v = std::complex<double>(spec[i][0], spec[i][1]) * kernel_hat[i];
      spec[i][0] = v.real();
      spec[i][1] = v.imag();
    }
    fftw_execute(backward);
    std::copy(real.get(), real.get() + grid.cells(), out.begin());
  }
};

PeriodicConvolver::PeriodicConvolver(const Kernel& kernel) : impl_(std::make_unique<Impl>(kernel)) {}
PeriodicConvolver::~PeriodicConvolver() = default;
PeriodicConvolver::PeriodicConvolver(PeriodicConvolver&&) noexcept = default;
PeriodicConvolver& PeriodicConvolver::operator=(PeriodicConvolver&&) noexcept = default;

const TorusGrid& PeriodicConvolver::grid() const noexcept { return impl_->grid; }

void PeriodicConvolver::convolve(std::span<const double> field, std::span<double> out) {
  if (field.size() != impl_->grid.cells() || out.size() != impl_->grid.cells())
    throw std::invalid_argument("convolve: field size does not match the grid");
  impl_->run(field, out);
}

void PeriodicConvolver::convolve_means(const std::array<std::span<const double>, 4>& means,
                                       const ShiftSet& shifts, std::span<double> out) {
  for (const auto& m : means)
    if (m.size() != impl_->grid.cells()) throw std::invalid_argument("convolve_means: field size mismatch");
  shifted_sum(impl_->grid, means, shifts, impl_->scratch);
  impl_->run(impl_->scratch, out);
  for (double& v : out) v *= 0.25;
}

std::vector<double> convolve_means(const Kernel& kernel, const ShiftSet& shifts,
                                   const std::array<std::vector<double>, 4>& means) {
  PeriodicConvolver convolver(kernel);
  std::vector<double> out(kernel.grid().cells());
  convolver.convolve_means({means[0], means[1], means[2], means[3]}, shifts, out);
  return out;
}

}  // namespace gridfield
