#include "gridfield/microscopic.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gridfield/fokker_planck.hpp"
#include "gridfield/parallel.hpp"

namespace gridfield {

void ParticleParams::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw std::invalid_argument("particles.tau must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw std::invalid_argument("particles.sigma must be >= 0");
  if (!std::isfinite(B)) throw std::invalid_argument("particles.B must be finite");
}

ParticleEnsemble::ParticleEnsemble(int populations, std::size_t columns, std::size_t per_column,
                                   std::uint64_t seed, int workers, double s0)
    : populations_(populations), columns_(columns), per_column_(per_column) {
  if (populations != 1 && populations != 4) throw std::invalid_argument("particles: populations must be 1 or 4");
  if (columns == 0 || per_column == 0) throw std::invalid_argument("particles: need at least one particle per column");
  if (!(s0 >= 0.0)) throw std::invalid_argument("particles: initial activity must be >= 0");
  s_.assign(static_cast<std::size_t>(populations) * columns * per_column, s0);
  const int w = std::max(1, workers);
  streams_.reserve(static_cast<std::size_t>(w));
  for (int i = 0; i < w; ++i) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(i)};
    streams_.emplace_back(seq);
  }
}

std::vector<double> ParticleEnsemble::means() const {
  std::vector<double> out(static_cast<std::size_t>(populations_) * columns_);
  for (std::size_t c = 0; c < out.size(); ++c) {
    const double* p = s_.data() + c * per_column_;
    double sum = 0.0;
    for (std::size_t k = 0; k < per_column_; ++k) sum += p[k];
    out[c] = sum / static_cast<double>(per_column_);
  }
  return out;
}

struct ParticleCoupling::Impl {
  double w0 = 0.0;
  std::unique_ptr<PeriodicConvolver> convolver;
  ShiftSet shifts{};
};

ParticleCoupling::ParticleCoupling(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}
ParticleCoupling::~ParticleCoupling() = default;
ParticleCoupling::ParticleCoupling(ParticleCoupling&&) noexcept = default;
ParticleCoupling& ParticleCoupling::operator=(ParticleCoupling&&) noexcept = default;

ParticleCoupling ParticleCoupling::all_to_all(double w0) {
  auto impl = std::make_unique<Impl>();
  impl->w0 = w0;
  return ParticleCoupling(std::move(impl));
}

ParticleCoupling ParticleCoupling::spatial(const Kernel& kernel, ShiftSet shifts) {
  auto impl = std::make_unique<Impl>();
  impl->convolver = std::make_unique<PeriodicConvolver>(kernel);
  impl->shifts = shifts;
  return ParticleCoupling(std::move(impl));
}

void ParticleCoupling::arguments(int populations, std::size_t columns, std::span<const double> means,
                                 std::vector<double>& out) {
  out.resize(columns);
  if (!impl_->convolver) {
    if (columns != 1) throw std::invalid_argument("all-to-all coupling expects a single column");
    double m = 0.0;
    for (int beta = 0; beta < populations; ++beta) m += means[static_cast<std::size_t>(beta)];
    out[0] = impl_->w0 * m / populations;
    return;
  }
  const auto& grid = impl_->convolver->grid();
  if (populations != 4 || columns != grid.cells())
    throw std::invalid_argument("spatial coupling expects 4 populations on n^2 columns");
  std::array<std::span<const double>, 4> fields;
  for (int beta = 0; beta < 4; ++beta) fields[beta] = means.subspan(beta * columns, columns);
  impl_->convolver->convolve_means(fields, impl_->shifts, out);
}

ParticleSimulator::ParticleSimulator(Activation activation, ParticleCoupling coupling, ParticleParams params)
    : activation_(activation), coupling_(std::move(coupling)), params_(params) {
  params_.validate();
}

std::vector<double> ParticleSimulator::rates(const ParticleEnsemble& ensemble) {
  const auto means = ensemble.means();
  coupling_.arguments(ensemble.populations(), ensemble.columns(), means, args_);
  std::vector<double> phi(args_.size());
  for (std::size_t c = 0; c < phi.size(); ++c) phi[c] = activation_(args_[c] + params_.B);
  return phi;
}

template <class Noise>
void ParticleSimulator::update(ParticleEnsemble& ensemble, double dt, Noise&& noise) {
  if (!(dt > 0.0) || dt > params_.tau / 10.0 * (1.0 + 1e-12))
    throw std::invalid_argument("particles: dt must lie in (0, tau/10]");
  const auto phi = rates(ensemble);
  const double a = dt / params_.tau;
  const double amp = std::sqrt(2.0 * params_.sigma * dt / params_.tau);
  const std::size_t m = ensemble.per_column();
  const std::size_t columns = ensemble.columns();
  auto s = ensemble.mutable_s();
  std::vector<char> bad(static_cast<std::size_t>(ensemble.workers()), 0);
  parallel_for(s.size(), ensemble.workers(), [&](std::size_t begin, std::size_t end, int worker) {
    bool ok = true;
    for (std::size_t i = begin; i < end; ++i) {
      const double rate = phi[(i / m) % columns];
      const double v = std::abs(s[i] + a * (rate - s[i]) + amp * noise(i, worker));
      ok &= std::isfinite(v);
      s[i] = v;
    }
    bad[static_cast<std::size_t>(worker)] = !ok;
  });
  if (std::any_of(bad.begin(), bad.end(), [](char b) { return b != 0; }))
    throw NumericalError("particles: non-finite activity at t = " + std::to_string(ensemble.t));
  ensemble.t += dt;
}

void ParticleSimulator::step(ParticleEnsemble& ensemble, double dt) {
  std::vector<std::normal_distribution<double>> normals(static_cast<std::size_t>(ensemble.workers()));
  update(ensemble, dt, [&](std::size_t, int worker) {
    return normals[static_cast<std::size_t>(worker)](ensemble.stream(worker));
  });
}

void ParticleSimulator::step_with_noise(ParticleEnsemble& ensemble, double dt, std::span<const double> xi) {
  if (xi.size() != ensemble.size()) throw std::invalid_argument("particles: one noise value per particle");
  update(ensemble, dt, [&](std::size_t i, int) { return xi[i]; });
}

void ParticleSimulator::advance(ParticleEnsemble& ensemble, double t_end, double dt,
                                const ParticleObserver& observer) {
  while (ensemble.t < t_end - 1e-12 * std::max(1.0, std::abs(t_end))) {
    step(ensemble, std::min(dt, t_end - ensemble.t));
    if (observer) observer(ensemble);
  }
}

std::vector<double> empirical_density(const ParticleEnsemble& ensemble, int bins, double s_max) {
  if (bins <= 0) throw std::invalid_argument("empirical_density: bins must be positive");
  if (!(s_max > 0.0)) throw std::invalid_argument("empirical_density: s_max must be positive");
  const std::size_t m = ensemble.per_column();
  const std::size_t groups = static_cast<std::size_t>(ensemble.populations()) * ensemble.columns();
  const double width = s_max / bins;
  const double weight = 1.0 / (static_cast<double>(m) * width);
  std::vector<double> h(groups * static_cast<std::size_t>(bins), 0.0);
  const auto s = ensemble.s();
  for (std::size_t g = 0; g < groups; ++g) {
    double* row = h.data() + g * static_cast<std::size_t>(bins);
    for (std::size_t k = 0; k < m; ++k) {
      const int b = std::min(bins - 1, static_cast<int>(s[g * m + k] / width));
      row[b] += weight;
    }
  }
  return h;
}

}  // namespace gridfield
