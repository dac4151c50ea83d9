#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "gridfield/fokker_planck.hpp"
#include "oracles.hpp"

using namespace gridfield;

namespace {

constexpr double kB = 3.0;

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "gridfield_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

double l1_distance(const FieldState& a, const FieldState& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) d += std::abs(a.data()[i] - b.data()[i]);
  return d * a.grid().dx() * a.grid().dx() * a.sgrid().ds();
}

// Random positive columns with unit mass each.
FieldState random_state(const TorusGrid& g, const SGrid& sg, unsigned seed) {
  FieldState st(g, sg);
  std::mt19937_64 rng(seed);
  std::exponential_distribution<double> e(1.0);
  std::bernoulli_distribution zero(0.3);
  auto f = st.mutable_data();
  for (std::size_t c = 0; c < st.columns(); ++c) {
    double mass = 0.0;
    for (int j = 0; j < sg.n_s; ++j) {
      double& v = f[c * sg.n_s + j];
      v = zero(rng) ? 0.0 : e(rng);
      mass += v * sg.ds();
    }
    if (mass == 0.0) {
      f[c * sg.n_s] = 1.0 / sg.ds();
      continue;
    }
    for (int j = 0; j < sg.n_s; ++j) f[c * sg.n_s + j] /= mass;
  }
  return st;
}

}  // namespace

TEST_CASE("solver parameters are validated") {
  SolverParams p;
  CHECK_NOTHROW(p.validate());
  p.tau = -1.0;
  CHECK_THROWS_WITH_AS(p.validate(), doctest::Contains("solver.tau"), std::invalid_argument);
  p = SolverParams{};
  p.cfl = 1.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = SolverParams{};
  p.sigma = -0.1;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("firing argument of a homogeneous state is W0 m + B") {
  const auto kernel = sample_kernel(TorusGrid(32), KernelParams{});
  const SGrid sg(64, 1.3);
  const auto d = solve_stationary_on_grid(Activation::relu(), kernel.w0(), kB, 0.01, sg);
  const auto st = uniform_state(kernel.grid(), sg, d.density);
  SolverParams p;
  p.sigma = 0.01;
  FokkerPlanckSolver solver(kernel, ShiftSet{1}, Activation::relu(), p);
  const auto args = solver.firing_argument(st, constant_input(kB));
  for (const auto& field : args)
    for (double v : field) CHECK(v == doctest::Approx(kernel.w0() * d.state.mean + kB).epsilon(1e-12));
}

TEST_CASE("firing argument equals direct summation on n=16") {
  const auto kernel = sample_kernel(TorusGrid(16), KernelParams{}, 7);
  const SGrid sg(16, 1.3);
  const auto st = random_state(kernel.grid(), sg, 5);
  FokkerPlanckSolver solver(kernel, ShiftSet{1}, Activation::relu(), SolverParams{});
  const std::array<double, 4> b{3.0, 3.1, 2.9, 3.05};
  const auto args = solver.firing_argument(st, b);
  const auto means = mean_activity(st);
  const auto direct = oracle::direct_convolve_means(kernel, 1, means.beta);
  const double scale = oracle::max_abs(direct);
  for (int beta = 0; beta < 4; ++beta)
    for (std::size_t i = 0; i < direct.size(); ++i)
      CHECK(std::abs(args[beta][i] - (direct[i] + b[beta])) <= 1e-10 * scale);
}

TEST_CASE("discrete stationary columns are preserved") {
  const auto kernel = sample_kernel(TorusGrid(32), KernelParams{});
  const SGrid sg(64, 1.3);
  for (double sigma : {0.002, 0.01, 0.03}) {
    const auto act = Activation::smooth_eps(0.01);
    const auto d = solve_stationary_on_grid(act, kernel.w0(), kB, sigma, sg);
    const auto start = uniform_state(kernel.grid(), sg, d.density);
    auto st = start;
    SolverParams p;
    p.sigma = sigma;
    FokkerPlanckSolver solver(kernel, ShiftSet{1}, act, p);
    for (int i = 0; i < 100; ++i) solver.step(st, constant_input(kB));
    CAPTURE(sigma);
    CHECK(l1_distance(st, start) <= 1e-8);
  }
}

TEST_CASE("zero-noise transport drifts the mean to the frozen rate") {
  // sigma = 0 and Phi = c: each particle follows s' = (c - s) / tau, so the
  // mean obeys m(t) = c + (m0 - c) exp(-t / tau) up to the O(ds) upwind error.
  const auto kernel = sample_kernel(TorusGrid(4), KernelParams{}, 1);
  const double c = 0.6;
  for (int n_s : {64, 128, 256}) {
    const SGrid sg(n_s, 1.3);
    auto st = random_delta_state(kernel.grid(), sg, 1.0, 1, 1.0);
    const double m0 = mean_activity(st).beta[0][0];
    SolverParams p;
    p.sigma = 0.0;
    FokkerPlanckSolver solver(kernel, ShiftSet{1}, Activation::constant(c), p);
    solver.advance(st, 30.0, [](double) { return constant_input(kB); });
    const double exact = c + (m0 - c) * std::exp(-30.0 / p.tau);
    const double m = mean_activity(st).beta[0][0];
    CAPTURE(n_s);
    CHECK(std::abs(m - exact) <= 2.0 * sg.ds());
    // Long run: the mass collects in the cells around c.
    solver.advance(st, 400.0, [](double) { return constant_input(kB); });
    CHECK(std::abs(mean_activity(st).beta[0][0] - c) <= sg.ds());
  }
}

TEST_CASE("mass is conserved and densities stay nonnegative on random states") {
  const auto kernel = sample_kernel(TorusGrid(8), KernelParams{}, 3);
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const SGrid sg(16 + 8 * (trial % 4), 1.3);
    auto st = random_state(kernel.grid(), sg, 100 + trial);
    SolverParams p;
    p.sigma = trial % 3 == 0 ? 0.0 : 0.05 * u(rng);
    p.cfl = 0.5 + 0.5 * u(rng);
    const auto act = trial % 2 ? Activation::sigmoid(15.0) : Activation::relu();
    FokkerPlanckSolver solver(kernel, ShiftSet{1}, act, p);
    const std::array<double, 4> b{3.0 + u(rng), 3.0 - u(rng), 3.0, 2.5};
    std::vector<double> mass(st.columns());
    for (int beta = 0; beta < 4; ++beta)
      for (int ix = 0; ix < 8; ++ix)
        for (int iy = 0; iy < 8; ++iy) mass[st.column_offset(beta, ix, iy) / sg.n_s] = st.column_mass(beta, ix, iy);
    for (int s = 0; s < 200; ++s) {
      REQUIRE_NOTHROW(solver.step(st, b));
      for (double v : st.data()) REQUIRE(v >= 0.0);
    }
    for (int beta = 0; beta < 4; ++beta)
      for (int ix = 0; ix < 8; ++ix)
        for (int iy = 0; iy < 8; ++iy)
          CHECK(std::abs(st.column_mass(beta, ix, iy) - mass[st.column_offset(beta, ix, iy) / sg.n_s]) <= 1e-12);
  }
}

TEST_CASE("run_to_stationary stops at t_min from a steady state") {
  const auto kernel = sample_kernel(TorusGrid(16), KernelParams{}, 7);
  const SGrid sg(32, 1.3);
  SolverParams p;
  p.sigma = 0.03;
  p.t_min = 20.0;
  p.t_max = 60.0;
  const auto act = Activation::sigmoid(15.0);
  const auto d = solve_stationary_on_grid(act, kernel.w0(), kB, p.sigma, sg);
  auto st = uniform_state(kernel.grid(), sg, d.density);
  FokkerPlanckSolver solver(kernel, ShiftSet{1}, act, p);
  const auto r = solver.run_to_stationary(st);
  CHECK(r.stop_reason == "stationary");
  CHECK(r.final_time >= p.t_min);
  CHECK(r.final_time < p.t_min + 1.0);
  CHECK(r.derivative < 1e-10);
}

TEST_CASE("run_to_stationary reports max-time when the tolerance is out of reach") {
  const auto kernel = sample_kernel(TorusGrid(16), KernelParams{}, 7);
  const SGrid sg(32, 1.3);
  SolverParams p;
  p.sigma = 0.01;
  p.t_min = 5.0;
  p.t_max = 10.0;
  p.stop_tol = 1e-300;
  auto st = random_delta_state(kernel.grid(), sg, 0.05, 3);
  FokkerPlanckSolver solver(kernel, ShiftSet{1}, Activation::relu(), p);
  const auto r = solver.run_to_stationary(st);
  CHECK(r.stop_reason == "max-time");
  CHECK(r.final_time == doctest::Approx(10.0));
}

TEST_CASE("mean activity") {
  const TorusGrid g(4);
  const SGrid sg(13, 1.3);
  auto st = random_delta_state(g, sg, 1.0, 1, 1.0);
  const auto m = mean_activity(st);
  for (double v : m.beta[2]) CHECK(v == doctest::Approx(sg.center(sg.cell_of(1.0))));
  for (double v : m.total) CHECK(v == doctest::Approx(4.0 * sg.center(sg.cell_of(1.0))));

  // f_inf columns reproduce <f_inf> to O(ds^2) away from the s = 0 edge.
  const SGrid fine(256, 1.3);
  const auto hom = solve_stationary(Activation::relu(), -20.6711, kB, 0.005);
  auto dens = sample_density(hom, fine);
  const auto st2 = uniform_state(g, fine, dens);
  CHECK(mean_activity(st2).beta[0][5] == doctest::Approx(hom.mean).epsilon(2.0 * fine.ds() * fine.ds() / hom.mean));

  // Linear in the state.
  const auto a = random_delta_state(g, sg, 0.5, 4);
  const auto b = random_delta_state(g, sg, 0.5, 9);
  FieldState mix(g, sg);
  auto f = mix.mutable_data();
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 0.25 * a.data()[i] + 0.75 * b.data()[i];
  const auto ma = mean_activity(a), mb = mean_activity(b), mm = mean_activity(mix);
  for (std::size_t i = 0; i < mm.total.size(); ++i)
    CHECK(mm.total[i] == doctest::Approx(0.25 * ma.total[i] + 0.75 * mb.total[i]).epsilon(1e-14));
}

TEST_CASE("random delta initial data") {
  const TorusGrid g(32);
  const SGrid sg(64, 1.3);
  const auto st = random_delta_state(g, sg, 0.01, 42);
  const int active = sg.cell_of(1.0);
  for (int beta = 0; beta < 4; ++beta) {
    int count = 0;
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy) {
        CHECK(st.column_mass(beta, ix, iy) == doctest::Approx(1.0).epsilon(1e-14));
        if (st.column(beta, ix, iy)[active] > 0.0) ++count;
      }
    CHECK(count == 10);  // round(0.01 * 1024)
  }
  const auto again = random_delta_state(g, sg, 0.01, 42);
  CHECK(std::equal(st.data().begin(), st.data().end(), again.data().begin()));
}

TEST_CASE("external input") {
  Trajectory still;
  still.t = {0.0, 20.0, 40.0};
  still.x = {1.0, 1.0, 1.0};
  still.y = {2.0, 2.0, 2.0};
  for (double b : external_input(10.0, still, 0.3, kB)) CHECK(b == kB);

  Trajectory north;
  north.t = {0.0, 20.0, 40.0};
  north.x = {0.0, 0.0, 0.0};
  north.y = {0.0, 0.4, 0.8};  // 0.02 cm/ms
  const auto b = external_input(15.0, north, 0.3, kB);
  CHECK(b[0] == doctest::Approx(kB + 0.3 * 0.02));
  CHECK(b[2] == doctest::Approx(kB - 0.3 * 0.02));
  CHECK(b[1] == doctest::Approx(kB));
  CHECK(b[3] == doctest::Approx(kB));

  const auto tr = synth_trajectory(SynthTrajectoryParams{}, 3);
  for (double t = 0.0; t < 60000.0; t += 137.0) {
    const auto bb = external_input(t, tr, 0.3, kB);
    CHECK(bb[0] + bb[1] + bb[2] + bb[3] == doctest::Approx(4.0 * kB).epsilon(1e-14));
  }
  CHECK_THROWS_AS(external_input(-1.0, tr, 0.3, kB), std::out_of_range);
}

TEST_CASE("GCNF1 dump layout and round trip") {
  const TorusGrid g(4);
  const SGrid sg(8, 1.3);
  auto st = random_delta_state(g, sg, 0.25, 2);
  st.t = 123.5;
  const auto path = temp_path("state.gcnf");
  write_state(path, st);
  CHECK(std::filesystem::file_size(path) == 5 + 5 * 4 + (4 * 4 * 4 * 8 + 1) * 8);

  std::ifstream in(path, std::ios::binary);
  char magic[5];
  std::uint32_t dims[5];
  in.read(magic, 5);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  CHECK(std::string(magic, 5) == "GCNF1");
  CHECK(dims[0] == 4);
  CHECK(dims[1] == 4);
  CHECK(dims[2] == 4);
  CHECK(dims[3] == 8);
  CHECK(dims[4] == 0);
  // The first value is f[beta=0][x=0][y=0][s=0].
  double first;
  in.read(reinterpret_cast<char*>(&first), 8);
  CHECK(first == st.column(0, 0, 0)[0]);

  const auto back = read_state(path, 1.3);
  CHECK(back.t == 123.5);
  CHECK(std::equal(st.data().begin(), st.data().end(), back.data().begin()));

  std::ofstream(temp_path("bad.gcnf"), std::ios::binary) << "NOPE";
  CHECK_THROWS(read_state(temp_path("bad.gcnf")));
}

TEST_CASE("slice CSV lists every cell of the four populations") {
  const TorusGrid g(4);
  const SGrid sg(8, 1.3);
  const auto st = random_delta_state(g, sg, 0.5, 2);
  const auto path = temp_path("slice.csv");
  write_slice_csv(path, st, 0.0);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "beta,ix,iy,x,y,f");
  int rows = 0;
  double total = 0.0;
  while (std::getline(in, line)) {
    ++rows;
    total += std::stod(line.substr(line.rfind(',') + 1));
  }
  CHECK(rows == 64);
  double expected = 0.0;
  for (int beta = 0; beta < 4; ++beta)
    for (int ix = 0; ix < 4; ++ix)
      for (int iy = 0; iy < 4; ++iy) expected += st.column(beta, ix, iy)[0];
  CHECK(total == doctest::Approx(expected));
}

TEST_CASE("1-D solver keeps the grid fixed point to 1e-8 per step") {
  const SGrid sg(512, 3.0);
  const auto act = Activation::smooth_eps(0.01);
  SolverParams p;
  p.sigma = 0.03;
  const auto fixed = solve_stationary_on_grid(act, -20.6711, kB, p.sigma, sg);
  HomogeneousSolver1D solver(sg, act, -20.6711, p);
  solver.set_density(fixed.density);
  for (int i = 0; i < 10; ++i) {
    solver.step();
    double d = 0.0;
    for (int j = 0; j < sg.n_s; ++j) d += std::abs(solver.density()[j] - fixed.density[j]) * sg.ds();
    CHECK(d <= 1e-8);
  }
}

TEST_CASE("continuous stationary density is a fixed point up to O(ds^2)") {
  // Point samples of the truncated Gaussian are exact for the flux; only the
  // midpoint-rule mean differs from the exact one, so the drift rate
  // ||f(dt) - f_inf|| / dt falls by 4 per halving of ds.
  const auto act = Activation::smooth_eps(0.01);
  SolverParams p;
  p.sigma = 0.03;
  const auto hom = solve_stationary(act, -20.6711, kB, p.sigma);
  std::vector<double> rates, gaps;
  for (int n_s : {256, 512, 1024}) {
    const SGrid sg(n_s, 3.0);
    const auto f0 = sample_density(hom, sg);
    HomogeneousSolver1D solver(sg, act, -20.6711, p);
    solver.set_density(f0);
    const auto info = solver.step();
    double d = 0.0;
    for (int j = 0; j < n_s; ++j) d += std::abs(solver.density()[j] - f0[j]) * sg.ds();
    rates.push_back(d / info.dt);
    const auto fixed = solve_stationary_on_grid(act, -20.6711, kB, p.sigma, sg);
    double g = 0.0;
    for (int j = 0; j < n_s; ++j) g += std::abs(fixed.density[j] - f0[j]) * sg.ds();
    gaps.push_back(g);
  }
  for (std::size_t i = 1; i < rates.size(); ++i) {
    CHECK(rates[i - 1] / rates[i] == doctest::Approx(4.0).epsilon(0.05));
    CHECK(gaps[i - 1] / gaps[i] == doctest::Approx(4.0).epsilon(0.05));
  }
}

TEST_CASE("1-D solver relaxes to the discrete fixed point") {
  const SGrid sg(512, 3.0);
  const auto act = Activation::smooth_eps(0.01);
  SolverParams p;
  p.sigma = 0.03;
  const auto target = solve_stationary_on_grid(act, -20.6711, kB, p.sigma, sg);
  HomogeneousSolver1D solver(sg, act, -20.6711, p);
  std::vector<double> f(sg.n_s, 0.0);
  f[sg.cell_of(1.0)] = 1.0 / sg.ds();
  solver.set_density(f);
  solver.advance(200.0);
  double d = 0.0;
  for (int j = 0; j < sg.n_s; ++j) d += std::abs(solver.density()[j] - target.density[j]) * sg.ds();
  CHECK(d <= 1e-10);
  CHECK(solver.mean() == doctest::Approx(target.state.mean).epsilon(1e-10));
  CHECK(solver.t() == 200.0);
}
