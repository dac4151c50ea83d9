#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "gridfield/homogeneous.hpp"

using namespace gridfield;

namespace {
constexpr double kW0 = -20.6711;
constexpr double kB = 3.0;
}  // namespace

TEST_CASE("erfcx matches exp(x^2) erfc(x) and its asymptotics") {
  for (double x = -5.0; x <= 5.0; x += 0.25) CHECK(erfcx(x) == doctest::Approx(std::exp(x * x) * std::erfc(x)).epsilon(1e-13));
  // erfcx(x) ~ 1/(x sqrt(pi)) (1 - 1/(2x^2) + 3/(4x^4)), next term 15/(8x^6).
  for (double x : {8.0, 20.0, 100.0}) {
    const double series = 1.0 / (x * std::sqrt(std::numbers::pi)) * (1.0 - 0.5 / (x * x) + 0.75 / std::pow(x, 4));
    CHECK(erfcx(x) == doctest::Approx(series).epsilon(2.0 / std::pow(x, 6) + 1e-14));
  }
  CHECK(std::isfinite(erfcx(-20.0)));
}

TEST_CASE("g(eta) reference values and bound") {
  CHECK(g_eta(0.0) == doctest::Approx(1.0 - 2.0 / std::numbers::pi).epsilon(1e-14));
  CHECK(g_eta(20.0) == doctest::Approx(1.0).epsilon(1e-14));
  double top = -1.0;
  for (int i = 0; i <= 40000; ++i) {
    const double g = g_eta(-20.0 + 1e-3 * i);
    CHECK(std::isfinite(g));
    top = std::max(top, g);
  }
  CHECK(top <= 1.0 + 1e-9);
}

TEST_CASE("half-normal state at phi0 = 0") {
  const double sigma = 0.5;
  const auto st = solve_stationary(Activation::constant(0.0), kW0, kB, sigma);
  CHECK(st.phi0 == 0.0);
  CHECK(st.mean == doctest::Approx(std::sqrt(1.0 / std::numbers::pi)).epsilon(1e-12));
  CHECK(density_at(st, 0.0) == doctest::Approx(2.0 / std::sqrt(2.0 * std::numbers::pi * sigma)).epsilon(1e-13));
  CHECK(st.Z == doctest::Approx(std::sqrt(std::numbers::pi * sigma / 2.0)).epsilon(1e-14));
  CHECK(st.m_inf == doctest::Approx(sigma * (1.0 - 2.0 / std::numbers::pi)).epsilon(1e-12));
  CHECK(m_infinity_quadrature(st) == doctest::Approx(sigma * (1.0 - 2.0 / std::numbers::pi)).epsilon(1e-10));
}

TEST_CASE("density peaks at 1/Z and integrates to one") {
  for (double sigma : {1e-4, 0.005, 0.03, 0.1}) {
    const auto st = solve_stationary(Activation::smooth_eps(0.01), kW0, kB, sigma);
    CAPTURE(sigma);
    CHECK(density_at(st, st.phi0) == doctest::Approx(1.0 / st.Z).epsilon(1e-13));
    CHECK(st.Z > 0.0);
    CHECK(mass_quadrature(st, st.phi0 + 12.0 * std::sqrt(sigma)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(st.m_inf > 0.0);
    CHECK(st.m_inf == doctest::Approx(m_infinity_quadrature(st)).epsilon(1e-8));
  }
}

TEST_CASE("consistency residual signs on the bracket") {
  const auto act = Activation::smooth_eps(0.01);
  for (double sigma : {1e-4, 0.01, 0.1}) {
    CHECK(consistency_residual(0.0, sigma, act, kW0, kB) > 0.0);
    // The bound quoted with sqrt(sigma / (2 pi)) already holds 0.1 beyond it.
    const double m = act(kB) + std::sqrt(sigma / (2.0 * std::numbers::pi)) + 0.1;
    CHECK(consistency_residual(m, sigma, act, kW0, kB) < 0.0);
  }
}

TEST_CASE("zero-noise relu fixed point") {
  const auto st = solve_stationary(Activation::relu(), kW0, kB, 1e-8);
  CHECK(st.mean == doctest::Approx(kB / (1.0 - kW0)).epsilon(1e-6));
  CHECK(st.mean == doctest::Approx(0.138433).epsilon(1e-5));
  CHECK(zero_noise_mean(Activation::relu(), kW0, kB) == doctest::Approx(kB / (1.0 - kW0)).epsilon(1e-13));
}

TEST_CASE("constant activation has a closed-form mean") {
  const double c = 0.2, sigma = 0.05;
  const auto st = solve_stationary(Activation::constant(c), kW0, kB, sigma);
  const double z = std::sqrt(std::numbers::pi * sigma / 2.0) * (1.0 + std::erf(c / std::sqrt(2.0 * sigma)));
  CHECK(st.mean == doctest::Approx(c + sigma * std::exp(-c * c / (2.0 * sigma)) / z).epsilon(1e-12));
}

TEST_CASE("zero-noise limit of sigma / M_inf") {
  const auto st = solve_stationary(Activation::relu(), kW0, kB, 1e-4);
  CHECK(st.phi0 > 0.0);
  CHECK(st.m_inf / 1e-4 >= 0.95);
  CHECK(st.m_inf / 1e-4 <= 1.0);
  // Since g <= 1, sigma / M_inf approaches 1 from above.
  for (double sigma : {1e-6, 1e-5, 1e-4, 5e-4, 1e-3}) {
    const auto s = solve_stationary(Activation::relu(), kW0, kB, sigma);
    CHECK(sigma / s.m_inf >= 1.0);
    CHECK(sigma / s.m_inf <= 1.1);
  }
}

TEST_CASE("G changes sign exactly once and decreases through the root") {
  const auto act = Activation::smooth_eps(0.01);
  for (int i = 0; i <= 20; ++i) {
    const double sigma = 1e-4 * std::pow(1000.0, i / 20.0);
    const double hi = std::max(act(kB), 0.0) + std::sqrt(2.0 * sigma / std::numbers::pi);
    int changes = 0;
    double prev = consistency_residual(0.0, sigma, act, kW0, kB);
    for (int j = 1; j <= 10000; ++j) {
      const double g = consistency_residual(hi * j / 10000.0, sigma, act, kW0, kB);
      if ((g > 0.0) != (prev > 0.0)) ++changes;
      prev = g;
    }
    CAPTURE(sigma);
    CHECK(changes == 1);
    const auto st = solve_stationary(act, kW0, kB, sigma);
    CHECK(std::abs(st.residual) <= 1e-12);
    const double h = 1e-7;
    const double slope = (consistency_residual(st.mean + h, sigma, act, kW0, kB) -
                          consistency_residual(st.mean - h, sigma, act, kW0, kB)) / (2.0 * h);
    CHECK(slope < 0.0);
  }
}

TEST_CASE("inadmissible inputs are reported") {
  CHECK_THROWS_AS(solve_stationary(Activation::relu(), kW0, kB, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(solve_stationary(Activation::relu(), 1.0, kB, 0.01), std::invalid_argument);
  // With a large |W0| the undershoot of smooth_eps violates Phi' > 1/W0.
  CHECK_THROWS_AS(solve_stationary(Activation::smooth_eps(0.01), -100.0, kB, 0.01), std::domain_error);
}

TEST_CASE("grid stationary state is the discrete Gibbs law") {
  const SGrid grid(512, 3.0);
  const auto act = Activation::smooth_eps(0.01);
  const auto d = solve_stationary_on_grid(act, kW0, kB, 0.03, grid);
  double mass = 0.0, mean = 0.0;
  for (int j = 0; j < grid.n_s; ++j) {
    mass += d.density[j] * grid.ds();
    mean += grid.center(j) * d.density[j] * grid.ds();
  }
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(mean == doctest::Approx(d.state.mean).epsilon(1e-12));
  CHECK(act(kW0 * mean + kB) == doctest::Approx(d.state.phi0).epsilon(1e-12));
  // Midpoint moments differ from the continuous ones at O(ds^2) plus the s = 0 edge.
  const auto cont = solve_stationary(act, kW0, kB, 0.03);
  CHECK(std::abs(d.state.mean - cont.mean) < 1e-4);
}
