#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "gridfield/activation.hpp"
#include "gridfield/connectivity.hpp"

namespace gridfield {

struct ParticleParams {
  double tau = 10.0;  // ms
  double sigma = 0.01;
  double B = 3.0;

  void validate() const;
};

/// Activity values s of M particles in each of N columns for P populations,
/// stored (beta, column, particle). One RNG stream per worker, seeded from
/// seed_seq{seed low word, seed high word, worker index}; a run is
/// reproducible for a fixed (seed, workers) pair.
class ParticleEnsemble {
 public:
  ParticleEnsemble(int populations, std::size_t columns, std::size_t per_column, std::uint64_t seed,
                   int workers = 1, double s0 = 0.0);

  int populations() const noexcept { return populations_; }
  std::size_t columns() const noexcept { return columns_; }
  std::size_t per_column() const noexcept { return per_column_; }
  std::size_t size() const noexcept { return s_.size(); }
  int workers() const noexcept { return static_cast<int>(streams_.size()); }

  std::size_t index(int beta, std::size_t column, std::size_t k) const noexcept {
    return (static_cast<std::size_t>(beta) * columns_ + column) * per_column_ + k;
  }
  std::span<const double> s() const noexcept { return s_; }
  std::span<double> mutable_s() noexcept { return s_; }

  /// Column means, (beta, column) order.
  std::vector<double> means() const;

  std::mt19937_64& stream(int worker) { return streams_.at(static_cast<std::size_t>(worker)); }

  double t = 0.0;

 private:
  int populations_;
  std::size_t columns_;
  std::size_t per_column_;
  std::vector<double> s_;
  std::vector<std::mt19937_64> streams_;
};

/// How column means turn into the synaptic part of the firing argument.
class ParticleCoupling {
 public:
  /// One column, arg = W0 times the population-averaged mean.
  static ParticleCoupling all_to_all(double w0);
  /// n^2 columns on the torus, arg = 1/4 sum_beta W(. - r^beta) * mean_beta.
  static ParticleCoupling spatial(const Kernel& kernel, ShiftSet shifts);

  ~ParticleCoupling();
  ParticleCoupling(ParticleCoupling&&) noexcept;
  ParticleCoupling& operator=(ParticleCoupling&&) noexcept;

  /// Synaptic argument per column (without B); means in (beta, column) order.
  void arguments(int populations, std::size_t columns, std::span<const double> means, std::vector<double>& out);

 private:
  struct Impl;
  explicit ParticleCoupling(std::unique_ptr<Impl> impl);
  std::unique_ptr<Impl> impl_;
};

using ParticleObserver = std::function<void(const ParticleEnsemble&)>;

/// Euler-Maruyama for tau ds = (Phi(arg) - s) dt + sqrt(2 sigma) dW with the
/// reflection s <- |s| after every step.
class ParticleSimulator {
 public:
  ParticleSimulator(Activation activation, ParticleCoupling coupling, ParticleParams params);

  const ParticleParams& params() const noexcept { return params_; }

  /// Phi(arg + B) per column from the current empirical means.
  std::vector<double> rates(const ParticleEnsemble& ensemble);

  void step(ParticleEnsemble& ensemble, double dt);
  /// Same update with caller-supplied standard normals, one per particle.
  void step_with_noise(ParticleEnsemble& ensemble, double dt, std::span<const double> xi);
  /// Fixed steps of dt (the last one clipped) until t_end; observer after each.
  void advance(ParticleEnsemble& ensemble, double t_end, double dt, const ParticleObserver& observer = {});

 private:
  template <class Noise>
  void update(ParticleEnsemble& ensemble, double dt, Noise&& noise);

  Activation activation_;
  ParticleCoupling coupling_;
  ParticleParams params_;
  std::vector<double> args_;
};

/// Histogram densities on [0, s_max] per (beta, column), each integrating to
/// one; particles above s_max are counted in the last bin.
std::vector<double> empirical_density(const ParticleEnsemble& ensemble, int bins, double s_max);

}  // namespace gridfield
