#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "gridfield/stability.hpp"

using namespace gridfield;

namespace {

constexpr double kB = 3.0;

struct PaperSetup {
  Kernel kernel = sample_kernel(TorusGrid(64), KernelParams{});
  ShiftSet shifts{1};
};

const PaperSetup& paper() {
  static const PaperSetup s;
  return s;
}

Kernel scaled(const Kernel& k, double c) {
  std::vector<double> v(k.samples().begin(), k.samples().end());
  for (double& x : v) x *= c;
  return Kernel(k.grid(), std::move(v), k.spectral().k_max());
}

}  // namespace

TEST_CASE("zero mode of the dispersion is Phi0' W0") {
  const auto& p = paper();
  const auto act = Activation::smooth_eps(0.01);
  const auto hom = solve_stationary(act, p.kernel.w0(), kB, 0.01);
  const auto t = dispersion(p.kernel, p.shifts, hom, act);
  CHECK(t.at(0, 0).F == doctest::Approx(t.phi0_prime * p.kernel.w0()).epsilon(1e-12));
  CHECK(t.at(0, 0).F <= 0.0);
  CHECK(t.at(0, 0).shift == 4.0);
  for (int k1 = 0; k1 <= 10; ++k1)
    for (int k2 = 0; k2 <= 10; ++k2) {
      CHECK(t.at(k1, k2).F == doctest::Approx(t.at(-k1, k2).F).epsilon(1e-12));
      CHECK(t.at(k1, k2).F == doctest::Approx(t.at(k1, -k2).F).epsilon(1e-12));
      CHECK(t.at(k1, k2).F == doctest::Approx(t.at(-k1, -k2).F).epsilon(1e-12));
    }
}

TEST_CASE("dominant modes lie in the reported set") {
  const auto& p = paper();
  const auto act = Activation::smooth_eps(0.01);
  const double m = zero_noise_mean(act, p.kernel.w0(), kB);
  const auto t = dispersion_with_slope(p.kernel, p.shifts, act.derivative(p.kernel.w0() * m + kB));
  const std::set<std::pair<int, int>> allowed{{4, 0}, {4, 1}, {3, 3}, {1, 4}, {0, 4}};
  const auto top = dominant_modes(t);
  REQUIRE(!top.empty());
  for (const auto& e : top) {
    CAPTURE(e.k1);
    CAPTURE(e.k2);
    CHECK(allowed.count({e.k1, e.k2}) == 1);
  }
}

TEST_CASE("argmax set is invariant under positive scaling of Phi0'") {
  const auto& p = paper();
  const auto a = dominant_modes(dispersion_with_slope(p.kernel, p.shifts, 0.9));
  const auto b = dominant_modes(dispersion_with_slope(p.kernel, p.shifts, 1.8));
  const auto c = dominant_modes(dispersion_with_slope(p.kernel, p.shifts, 0.013));
  REQUIRE(a.size() == b.size());
  REQUIRE(a.size() == c.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].k1 == b[i].k1);
    CHECK(a[i].k2 == b[i].k2);
    CHECK(a[i].k1 == c[i].k1);
    CHECK(b[i].F == doctest::Approx(2.0 * a[i].F).epsilon(1e-14));
  }
}

TEST_CASE("with Phi0' frozen, kernel amplitude scales F exactly") {
  const auto& p = paper();
  const auto k3 = scaled(p.kernel, 3.0);
  const auto t1 = dispersion_with_slope(p.kernel, p.shifts, 0.7);
  const auto t3 = dispersion_with_slope(k3, p.shifts, 0.7);
  for (std::size_t i = 0; i < t1.entries.size(); ++i)
    CHECK(t3.entries[i].F == doctest::Approx(3.0 * t1.entries[i].F).epsilon(1e-10));
}

TEST_CASE("zero-noise stability verdicts") {
  const auto& p = paper();
  const double m = zero_noise_mean(Activation::relu(), p.kernel.w0(), kB);
  const auto t = dispersion_with_slope(p.kernel, p.shifts, Activation::relu().derivative(p.kernel.w0() * m + kB));
  const auto v = zero_noise_stable(t);
  CHECK_FALSE(v.stable);
  CHECK(v.worst.F > 1.0);

  // Rescaled below threshold.
  const auto half = dispersion_with_slope(p.kernel, p.shifts, t.phi0_prime * 0.5 / t.max_F());
  CHECK(half.max_F() == doctest::Approx(0.5));
  CHECK(zero_noise_stable(half).stable);

  DispersionTable marginal;
  marginal.entries.push_back(DispersionEntry{1, 0, 1.0, 1.0, 1.0});
  CHECK_FALSE(zero_noise_stable(marginal).stable);
}

TEST_CASE("growth rate arithmetic") {
  CHECK(linearized_growth_rate(1.0, 10.0) == 0.0);
  CHECK(linearized_growth_rate(0.5, 10.0) == doctest::Approx(-0.05));
  CHECK_THROWS_AS(linearized_growth_rate(0.5, 0.0), std::invalid_argument);
}

TEST_CASE("noisy indicator tends to the zero-noise one") {
  const auto& p = paper();
  const auto act = Activation::smooth_eps(0.01);
  const double m = zero_noise_mean(act, p.kernel.w0(), kB);
  const auto t0 = dispersion_with_slope(p.kernel, p.shifts, act.derivative(p.kernel.w0() * m + kB));
  const double limit = t0.max_F() - 1.0;
  double prev = std::abs(noisy_stability_indicator(p.kernel, p.shifts, act, kB, 1e-3) - limit);
  for (double sigma : {1e-4, 1e-5, 1e-6}) {
    const double gap = std::abs(noisy_stability_indicator(p.kernel, p.shifts, act, kB, sigma) - limit);
    CHECK(gap <= prev);
    prev = gap;
  }
  CHECK(prev < 1e-3 * std::abs(limit));
}

TEST_CASE("critical sigma on the paper operating point") {
  const auto& p = paper();
  const auto act = Activation::smooth_eps(0.01);
  const double sc = critical_sigma(p.kernel, p.shifts, act, kB, 1e-3, 0.1);
  MESSAGE("sigma_c = " << sc);
  CHECK(noisy_stability_indicator(p.kernel, p.shifts, act, kB, sc - 1e-5) > 0.0);
  CHECK(noisy_stability_indicator(p.kernel, p.shifts, act, kB, sc + 1e-5) < 0.0);
}

TEST_CASE("critical sigma reports a missing crossing") {
  const auto& p = paper();
  const auto weak = scaled(p.kernel, 0.01);
  CHECK_THROWS_AS(critical_sigma(weak, p.shifts, Activation::relu(), kB, 1e-3, 0.1, {50, 10, 1e-7}),
                  NoCrossingError);
}

TEST_CASE("mode patterns") {
  const TorusGrid g(64);
  const auto empty = mode_pattern(g, {}, {});
  CHECK(std::all_of(empty.begin(), empty.end(), [](double v) { return v == 0.0; }));

  const std::vector<LatticeMode> stripe{{4, 0}};
  const std::vector<double> w{1.0};
  const auto f = mode_pattern(g, stripe, w);
  // Constant along y, four periods (eight sign changes) along x.
  int changes = 0;
  for (int ix = 0; ix < g.n; ++ix) {
    for (int iy = 1; iy < g.n; ++iy) CHECK(f[g.index(ix, iy)] == f[g.index(ix, 0)]);
    const double a = f[g.index(ix, 0)] + 1e-12;
    const double b = f[g.index(g.wrap(ix + 1), 0)] + 1e-12;
    if ((a > 0.0) != (b > 0.0)) ++changes;
  }
  CHECK(changes == 8);
  CHECK_THROWS_AS(mode_pattern(g, stripe, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("linearized mean dynamics grow at (F - 1) / tau") {
  // RK4 on tau h' = Phi0' (1/4) sum_beta W^beta * h - h with all four
  // populations equal, seeded with one lattice mode.
  const int n = 16;
  const auto kernel = sample_kernel(TorusGrid(n), KernelParams{}, 7);
  const auto& g = kernel.grid();
  const ShiftSet shifts{1};
  const double phi0p = 0.05, tau = 10.0;
  const auto table = dispersion_with_slope(kernel, shifts, phi0p, 7);
  PeriodicConvolver conv(kernel);
  for (auto [k1, k2] : {std::pair{2, 1}, std::pair{3, 0}}) {
    std::vector<double> h(g.cells());
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy)
        h[g.index(ix, iy)] = 1e-3 * std::cos(2.0 * std::numbers::pi * (k1 * g.center(ix) + k2 * g.center(iy)));
    auto rhs = [&](const std::vector<double>& u) {
      std::vector<double> c(u.size());
      conv.convolve_means({u, u, u, u}, shifts, c);
      for (std::size_t i = 0; i < u.size(); ++i) c[i] = (phi0p * c[i] - u[i]) / tau;
      return c;
    };
    auto norm = [](const std::vector<double>& u) {
      double s = 0.0;
      for (double v : u) s += v * v;
      return std::sqrt(s);
    };
    const double dt = 0.01, t_end = 20.0;
    const double n0 = norm(h);
    for (int step = 0; step < static_cast<int>(t_end / dt + 0.5); ++step) {
      auto a = rhs(h);
      std::vector<double> tmp(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + 0.5 * dt * a[i];
      auto b = rhs(tmp);
      for (std::size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + 0.5 * dt * b[i];
      auto c = rhs(tmp);
      for (std::size_t i = 0; i < h.size(); ++i) tmp[i] = h[i] + dt * c[i];
      auto d = rhs(tmp);
      for (std::size_t i = 0; i < h.size(); ++i) h[i] += dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
    }
    const double rate = std::log(norm(h) / n0) / t_end;
    CHECK(rate == doctest::Approx(linearized_growth_rate(table.at(k1, k2).F, tau)).epsilon(1e-6));
  }
}
