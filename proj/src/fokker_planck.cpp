#include "gridfield/fokker_planck.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "gridfield/parallel.hpp"

namespace gridfield {

void SolverParams::validate() const {
  auto fail = [](const std::string& key, const std::string& why) {
    throw std::invalid_argument("solver." + key + " " + why);
  };
  if (!(tau > 0.0) || !std::isfinite(tau)) fail("tau", "must be positive");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) fail("sigma", "must be >= 0");
  if (!std::isfinite(B)) fail("B", "must be finite");
  if (!std::isfinite(alpha)) fail("alpha", "must be finite");
  if (!(cfl > 0.0) || cfl > 1.0) fail("cfl", "must lie in (0, 1]");
  if (!(t_min >= 0.0)) fail("t_min", "must be >= 0");
  if (!(t_max >= t_min)) fail("t_max", "must be >= t_min");
  if (!(stop_tol > 0.0)) fail("stop_tol", "must be positive");
}

FieldState::FieldState(TorusGrid grid, SGrid sgrid)
    : grid_(grid), sgrid_(sgrid), f_(4 * grid.cells() * static_cast<std::size_t>(sgrid.n_s), 0.0) {}

double FieldState::column_mass(int beta, int ix, int iy) const noexcept {
  const auto c = column(beta, ix, iy);
  return std::accumulate(c.begin(), c.end(), 0.0) * sgrid_.ds();
}

FieldState uniform_state(const TorusGrid& grid, const SGrid& sgrid, std::span<const double> density) {
  if (density.size() != static_cast<std::size_t>(sgrid.n_s))
    throw std::invalid_argument("uniform_state: profile length must equal n_s");
  FieldState st(grid, sgrid);
  auto f = st.mutable_data();
  for (std::size_t c = 0; c < st.columns(); ++c)
    std::copy(density.begin(), density.end(), f.begin() + static_cast<std::ptrdiff_t>(c * sgrid.n_s));
  return st;
}

FieldState random_delta_state(const TorusGrid& grid, const SGrid& sgrid, double fraction, std::uint64_t seed,
                              double s_active) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("random_delta_state: fraction in [0, 1]");
  FieldState st(grid, sgrid);
  auto f = st.mutable_data();
  const double height = 1.0 / sgrid.ds();
  const int active_cell = sgrid.cell_of(s_active);
  const auto count = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(grid.cells())));
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> cells(grid.cells());
  for (int beta = 0; beta < 4; ++beta) {
    std::iota(cells.begin(), cells.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` entries become the active cells.
    for (std::size_t i = 0; i < count; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, cells.size() - 1);
      std::swap(cells[i], cells[pick(rng)]);
    }
    std::vector<char> active(grid.cells(), 0);
    for (std::size_t i = 0; i < count; ++i) active[cells[i]] = 1;
    for (int ix = 0; ix < grid.n; ++ix)
      for (int iy = 0; iy < grid.n; ++iy) {
        const std::size_t off = st.column_offset(beta, ix, iy);
        f[off + (active[grid.index(ix, iy)] ? active_cell : 0)] = height;
      }
  }
  return st;
}

MeanFields mean_activity(const FieldState& state) {
  const auto& g = state.grid();
  const auto& sg = state.sgrid();
  MeanFields out;
  out.total.assign(g.cells(), 0.0);
  for (int beta = 0; beta < 4; ++beta) {
    out.beta[beta].assign(g.cells(), 0.0);
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy) {
        const auto c = state.column(beta, ix, iy);
        double m = 0.0;
        for (int j = 0; j < sg.n_s; ++j) m += sg.center(j) * c[j];
        out.beta[beta][g.index(ix, iy)] = m * sg.ds();
        out.total[g.index(ix, iy)] += m * sg.ds();
      }
  }
  return out;
}

std::array<double, 4> external_input(double t, const Trajectory& trajectory, double alpha, double B) {
  const auto v = trajectory.velocity(t);
  std::array<double, 4> out{};
  for (int beta = 0; beta < 4; ++beta)
    out[beta] = B + alpha * (v[0] * ShiftSet::directions[beta][0] + v[1] * ShiftSet::directions[beta][1]);
  return out;
}

namespace {

// B(x) = x / (e^x - 1) for an arbitrary x.
double bernoulli(double x) {
  if (std::abs(x) < 1e-3) {
    const double x2 = x * x;
    return 1.0 - 0.5 * x + x2 / 12.0 - x2 * x2 / 720.0;
  }
  if (x > 0.0) {
    const double e = std::exp(-x);
    return x * e / -std::expm1(-x);
  }
  return x / std::expm1(x);
}

// Per-grid constants of the column update for one sigma.
struct ColumnScheme {
  int n_s = 0;
  double ds = 0.0;
  double sigma = 0.0;
  double s_max = 0.0;
  std::vector<double> center;
  std::vector<double> iface;      // s_{j+1/2}, j = 0 .. n_s - 2
  std::vector<double> iface_exp;  // exp(-s_{j+1/2} ds / sigma)
  bool fast_ok = false;

  ColumnScheme(const SGrid& g, double sig) : n_s(g.n_s), ds(g.ds()), sigma(sig), s_max(g.s_max) {
    center.resize(n_s);
    for (int j = 0; j < n_s; ++j) center[j] = g.center(j);
    iface.resize(n_s - 1);
    iface_exp.resize(n_s - 1);
    for (int j = 0; j + 1 < n_s; ++j) iface[j] = g.interface(j);
    fast_ok = sigma > 0.0 && s_max * ds / sigma <= 500.0;
    if (fast_ok)
      for (int j = 0; j + 1 < n_s; ++j) iface_exp[j] = std::exp(-iface[j] * ds / sigma);
  }

  double max_speed(double phi_min, double phi_max) const {
    const double lo = iface.front(), hi = iface.back();
    return std::max({std::abs(phi_max - lo), std::abs(phi_min - lo), std::abs(phi_max - hi), std::abs(phi_min - hi)});
  }

  double stable_dt(double phi_min, double phi_max, double tau, double cfl) const {
    const double rate = max_speed(phi_min, phi_max) / ds + 2.0 * sigma / (ds * ds);
    return rate > 0.0 ? cfl * tau / rate : std::numeric_limits<double>::infinity();
  }

  // flux[j + 1] = J_{j+1/2} for j = 0 .. n_s - 2; flux[0] = flux[n_s] = 0
  // are the no-flux walls. flux has n_s + 1 entries.
  void fluxes(double phi, const double* __restrict f, double* __restrict flux) const {
    const int m = n_s - 1;
    flux[0] = 0.0;
    flux[n_s] = 0.0;
    double* __restrict out = flux + 1;
    const double* __restrict sj = iface.data();
    if (sigma == 0.0) {
      for (int j = 0; j < m; ++j) {
        const double u = phi - sj[j];
        out[j] = u > 0.0 ? u * f[j] : u * f[j + 1];
      }
      return;
    }
    const double scale = sigma / ds;
    const double peclet = ds / sigma;
    if (fast_ok && std::abs(phi) * peclet <= 500.0) {
      const double e_phi = std::exp(phi * peclet);
      const double* __restrict ej = iface_exp.data();
#pragma omp simd
      for (int j = 0; j < m; ++j) {
        const double p = (phi - sj[j]) * peclet;
        const double ex = e_phi * ej[j];
        const double p2 = p * p;
        const double series = 1.0 - 0.5 * p + p2 / 12.0 - p2 * p2 / 720.0;
        // Both branches are evaluated so the loop stays branch-free.
        const bool small = std::fabs(p) < 1e-3;
        const double num = small ? series : p;
        const double den = small ? 1.0 : ex - 1.0;
        const double bp = num / den;
        // B(-p) f_j - B(p) f_{j+1} with B(-p) = B(p) + p.
        out[j] = scale * (bp * (f[j] - f[j + 1]) + p * f[j]);
      }
      return;
    }
    for (int j = 0; j < m; ++j) {
      const double p = (phi - sj[j]) * peclet;
      const double bp = bernoulli(p);
      out[j] = scale * (bp * (f[j] - f[j + 1]) + p * f[j]);
    }
  }

  // In-place update of one column; returns the new first moment
  // sum_j s_j f_j ds. delta (optional) accumulates f_new - f_old. Sets
  // `bad` if any new value is negative or not finite.
  double update(double phi, double lambda, double* __restrict f, double* __restrict flux,
                double* __restrict delta, bool& bad) const {
    fluxes(phi, f, flux);
    const double* __restrict c = center.data();
    double moment = 0.0;
    bool negative = false;
    if (delta) {
      for (int j = 0; j < n_s; ++j) {
        const double change = -lambda * (flux[j + 1] - flux[j]);
        delta[j] += change;
        f[j] += change;
      }
    } else {
      for (int j = 0; j < n_s; ++j) f[j] -= lambda * (flux[j + 1] - flux[j]);
    }
#pragma omp simd reduction(+ : moment) reduction(|| : negative)
    for (int j = 0; j < n_s; ++j) {
      moment += c[j] * f[j];
      negative = negative || !(f[j] >= 0.0);
    }
    bad = bad || negative;
    return moment * ds;
  }
};

void check_column(const double* f, int n_s, std::size_t column) {
  for (int j = 0; j < n_s; ++j)
    if (!(f[j] >= 0.0)) {
      std::ostringstream msg;
      msg << "fokker_planck: " << (std::isfinite(f[j]) ? "negative" : "non-finite") << " density " << f[j]
          << " in column " << column << ", s-cell " << j;
      throw NumericalError(msg.str());
    }
}

}  // namespace

struct FokkerPlanckSolver::Impl {
  Kernel kernel;
  ShiftSet shifts;
  Activation activation;
  SolverParams params;
  int threads;
  PeriodicConvolver convolver;
  std::unique_ptr<ColumnScheme> scheme;

  // Means of the state last written by this solver.
  const FieldState* cached_state = nullptr;
  std::uint64_t cached_revision = 0;
  std::array<std::vector<double>, 4> means;
  std::vector<double> conv;
  std::array<std::vector<double>, 4> phi;

  Impl(const Kernel& k, ShiftSet s, Activation a, SolverParams p, int t)
      : kernel(k), shifts(s), activation(a), params(p), threads(std::max(1, t)), convolver(kernel) {
    params.validate();
    if (s.z_cells < 0) throw std::invalid_argument("shift.z_cells must be >= 0");
  }

  const ColumnScheme& scheme_for(const SGrid& g) {
    if (!scheme || scheme->n_s != g.n_s || scheme->s_max != g.s_max || scheme->sigma != params.sigma)
      scheme = std::make_unique<ColumnScheme>(g, params.sigma);
    return *scheme;
  }

  void ensure_means(const FieldState& st) {
    if (cached_state == &st && cached_revision == st.revision()) return;
    const auto m = mean_activity(st);
    means = m.beta;
    cached_state = &st;
    cached_revision = st.revision();
  }

  void compute_arguments(const FieldState& st, const std::array<double, 4>& b, std::array<std::vector<double>, 4>& out) {
    if (st.grid().n != kernel.grid().n) throw std::invalid_argument("fokker_planck: state grid differs from kernel grid");
    ensure_means(st);
    conv.resize(st.grid().cells());
    convolver.convolve_means({means[0], means[1], means[2], means[3]}, shifts, conv);
    for (int beta = 0; beta < 4; ++beta) {
      out[beta].resize(conv.size());
      for (std::size_t i = 0; i < conv.size(); ++i) out[beta][i] = conv[i] + b[beta];
    }
  }

  StepInfo step(FieldState& st, const std::array<double, 4>& b, double dt_cap, bool track) {
    const auto& g = st.grid();
    const auto& sch = scheme_for(st.sgrid());
    compute_arguments(st, b, phi);
    double pmin = std::numeric_limits<double>::infinity(), pmax = -pmin;
    for (auto& field : phi)
      for (double& v : field) {
        v = activation(v);
        pmin = std::min(pmin, v);
        pmax = std::max(pmax, v);
      }
    if (!std::isfinite(pmin) || !std::isfinite(pmax)) throw NumericalError("fokker_planck: non-finite firing rate");

    StepInfo info;
    info.phi_min = pmin;
    info.phi_max = pmax;
    info.dt = std::min(sch.stable_dt(pmin, pmax, params.tau, params.cfl), dt_cap);
    if (!(info.dt > 0.0) || !std::isfinite(info.dt))
      throw NumericalError("fokker_planck: no finite time step (zero drift and zero noise need a dt cap)");
    const double lambda = info.dt / (params.tau * sch.ds);

    const int n = g.n;
    const int n_s = sch.n_s;
    const int workers = std::max(1, std::min(threads, n));
    std::vector<double> l1(workers, 0.0);
    double* f = st.f_.data();
    parallel_for(static_cast<std::size_t>(n), workers, [&](std::size_t begin, std::size_t end, int worker) {
      std::vector<double> flux(n_s + 1), delta(track ? n_s : 0);
      double acc = 0.0;
      bool bad = false;
      for (std::size_t ix = begin; ix < end; ++ix)
        for (int iy = 0; iy < n; ++iy) {
          const std::size_t cell = g.index(static_cast<int>(ix), iy);
          if (track) std::fill(delta.begin(), delta.end(), 0.0);
          for (int beta = 0; beta < 4; ++beta) {
            const std::size_t off = st.column_offset(beta, static_cast<int>(ix), iy);
            means[beta][cell] =
                sch.update(phi[beta][cell], lambda, f + off, flux.data(), track ? delta.data() : nullptr, bad);
            if (bad) check_column(f + off, n_s, off / n_s);
          }
          if (track)
            for (int j = 0; j < n_s; ++j) acc += std::abs(delta[j]);
        }
      l1[worker] = acc;
    });
    st.t += info.dt;
    ++st.revision_;
    cached_state = &st;
    cached_revision = st.revision_;
    if (track) {
      const double total = std::accumulate(l1.begin(), l1.end(), 0.0);
      info.derivative = total * g.dx() * g.dx() * sch.ds / info.dt;
    }
    return info;
  }
};

FokkerPlanckSolver::FokkerPlanckSolver(const Kernel& kernel, ShiftSet shifts, Activation activation,
                                       SolverParams params, int threads)
    : impl_(std::make_unique<Impl>(kernel, shifts, activation, params, threads)) {}
FokkerPlanckSolver::~FokkerPlanckSolver() = default;
FokkerPlanckSolver::FokkerPlanckSolver(FokkerPlanckSolver&&) noexcept = default;
FokkerPlanckSolver& FokkerPlanckSolver::operator=(FokkerPlanckSolver&&) noexcept = default;

const SolverParams& FokkerPlanckSolver::params() const noexcept { return impl_->params; }
const Kernel& FokkerPlanckSolver::kernel() const noexcept { return impl_->kernel; }
const ShiftSet& FokkerPlanckSolver::shifts() const noexcept { return impl_->shifts; }
const Activation& FokkerPlanckSolver::activation() const noexcept { return impl_->activation; }

void FokkerPlanckSolver::set_sigma(double sigma) {
  auto p = impl_->params;
  p.sigma = sigma;
  p.validate();
  impl_->params = p;
}

std::array<std::vector<double>, 4> FokkerPlanckSolver::firing_argument(const FieldState& state,
                                                                       const std::array<double, 4>& b_beta) {
  std::array<std::vector<double>, 4> out;
  impl_->compute_arguments(state, b_beta, out);
  return out;
}

double FokkerPlanckSolver::stable_dt(double phi_min, double phi_max, const SGrid& sgrid) const {
  return ColumnScheme(sgrid, impl_->params.sigma).stable_dt(phi_min, phi_max, impl_->params.tau, impl_->params.cfl);
}

StepInfo FokkerPlanckSolver::step(FieldState& state, const std::array<double, 4>& b_beta, double dt_cap,
                                  bool track_derivative) {
  return impl_->step(state, b_beta, dt_cap, track_derivative);
}

std::size_t FokkerPlanckSolver::advance(FieldState& state, double t_end, const InputFunction& input,
                                        const StepObserver& observer) {
  std::size_t steps = 0;
  while (state.t < t_end) {
    const double remaining = t_end - state.t;
    const auto info = impl_->step(state, input(state.t), remaining, false);
    // Absorb rounding so the clock lands on t_end.
    if (t_end - state.t < 1e-12 * std::max(1.0, t_end)) state.t = t_end;
    ++steps;
    if (observer) observer(state, info);
  }
  return steps;
}

StationaryReport FokkerPlanckSolver::run_to_stationary(FieldState& state, const StepObserver& observer) {
  const auto& p = impl_->params;
  const auto b = constant_input(p.B);
  StationaryReport report;
  while (true) {
    const auto info = impl_->step(state, b, p.t_max - state.t, true);
    if (p.t_max - state.t < 1e-12 * std::max(1.0, p.t_max)) state.t = p.t_max;
    ++report.steps;
    report.derivative = info.derivative;
    if (observer) observer(state, info);
    if (state.t >= p.t_min && info.derivative <= p.stop_tol) {
      report.stop_reason = "stationary";
      break;
    }
    if (state.t >= p.t_max) {
      report.stop_reason = "max-time";
      break;
    }
  }
  report.final_time = state.t;
  return report;
}

struct HomogeneousSolver1D::Impl {
  SGrid sgrid;
  Activation activation;
  double w0;
  SolverParams params;
  ColumnScheme scheme;
  std::vector<double> f;
  std::vector<double> flux;
  double t = 0.0;
  double mean = 0.0;

  Impl(SGrid g, Activation a, double w, SolverParams p)
      : sgrid(g), activation(a), w0(w), params(p), scheme(g, p.sigma), f(g.n_s, 0.0), flux(g.n_s + 1) {
    params.validate();
  }

  void refresh_mean() {
    double m = 0.0;
    for (int j = 0; j < sgrid.n_s; ++j) m += scheme.center[j] * f[j];
    mean = m * sgrid.ds();
  }
};

HomogeneousSolver1D::HomogeneousSolver1D(SGrid sgrid, Activation activation, double w0, SolverParams params)
    : impl_(std::make_unique<Impl>(sgrid, activation, w0, params)) {}
HomogeneousSolver1D::~HomogeneousSolver1D() = default;
HomogeneousSolver1D::HomogeneousSolver1D(HomogeneousSolver1D&&) noexcept = default;
HomogeneousSolver1D& HomogeneousSolver1D::operator=(HomogeneousSolver1D&&) noexcept = default;

const SGrid& HomogeneousSolver1D::sgrid() const noexcept { return impl_->sgrid; }
std::span<const double> HomogeneousSolver1D::density() const noexcept { return impl_->f; }
double HomogeneousSolver1D::t() const noexcept { return impl_->t; }
void HomogeneousSolver1D::set_time(double t) noexcept { impl_->t = t; }
double HomogeneousSolver1D::mean() const noexcept { return impl_->mean; }

void HomogeneousSolver1D::set_density(std::span<const double> f) {
  if (f.size() != impl_->f.size()) throw std::invalid_argument("set_density: length must equal n_s");
  std::copy(f.begin(), f.end(), impl_->f.begin());
  impl_->refresh_mean();
}

StepInfo HomogeneousSolver1D::step(double dt_cap) {
  auto& s = *impl_;
  const double phi = s.activation(s.w0 * s.mean + s.params.B);
  if (!std::isfinite(phi)) throw NumericalError("homogeneous solver: non-finite firing rate");
  StepInfo info;
  info.phi_min = info.phi_max = phi;
  info.dt = std::min(s.scheme.stable_dt(phi, phi, s.params.tau, s.params.cfl), dt_cap);
  if (!(info.dt > 0.0) || !std::isfinite(info.dt)) throw NumericalError("homogeneous solver: no finite time step");
  bool bad = false;
  s.mean = s.scheme.update(phi, info.dt / (s.params.tau * s.scheme.ds), s.f.data(), s.flux.data(), nullptr, bad);
  if (bad) check_column(s.f.data(), s.sgrid.n_s, 0);
  s.t += info.dt;
  return info;
}

void HomogeneousSolver1D::advance(double t_end) {
  while (impl_->t < t_end) {
    step(t_end - impl_->t);
    if (t_end - impl_->t < 1e-12 * std::max(1.0, t_end)) impl_->t = t_end;
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "GCNF1 dumps assume a little-endian host");

constexpr char kMagic[5] = {'G', 'C', 'N', 'F', '1'};

}  // namespace

void write_state(const std::filesystem::path& path, const FieldState& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t dims[5] = {4u, static_cast<std::uint32_t>(state.grid().n),
                                 static_cast<std::uint32_t>(state.grid().n),
                                 static_cast<std::uint32_t>(state.sgrid().n_s), 0u};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  const auto f = state.data();
  out.write(reinterpret_cast<const char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(&state.t), sizeof(double));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

FieldState read_state(const std::filesystem::path& path, double s_max) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  char magic[5];
  std::uint32_t dims[5];
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw std::runtime_error(path.string() + ": not a GCNF1 dump");
  if (dims[0] != 4u || dims[1] != dims[2] || dims[4] != 0u)
    throw std::runtime_error(path.string() + ": unexpected GCNF1 dimensions");
  FieldState st(TorusGrid(static_cast<int>(dims[1])), SGrid(static_cast<int>(dims[3]), s_max));
  auto f = st.mutable_data();
  in.read(reinterpret_cast<char*>(f.data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(&st.t), sizeof(double));
  if (!in) throw std::runtime_error(path.string() + ": truncated GCNF1 dump");
  if (in.peek() != std::char_traits<char>::eof()) throw std::runtime_error(path.string() + ": trailing bytes");
  return st;
}

void write_slice_csv(const std::filesystem::path& path, const FieldState& state, double s_star) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const auto& g = state.grid();
  const int j = state.sgrid().cell_of(s_star);
  out << "beta,ix,iy,x,y,f\n" << std::setprecision(17);
  for (int beta = 0; beta < 4; ++beta)
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy)
        out << beta << ',' << ix << ',' << iy << ',' << g.center(ix) << ',' << g.center(iy) << ','
            << state.column(beta, ix, iy)[j] << '\n';
}

}  // namespace gridfield
