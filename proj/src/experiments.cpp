#include "gridfield/experiments.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace gridfield {

// ---------------------------------------------------------------------------
// Names

std::string to_string(Pattern p) {
  switch (p) {
    case Pattern::homogeneous: return "homogeneous";
    case Pattern::stripe: return "stripe";
    case Pattern::hexagonal: return "hexagonal";
    case Pattern::eye: return "eye";
    case Pattern::other: return "other";
  }
  return "other";
}

Pattern parse_pattern(const std::string& name) {
  for (auto p : {Pattern::homogeneous, Pattern::stripe, Pattern::hexagonal, Pattern::eye, Pattern::other})
    if (to_string(p) == name) return p;
  throw std::invalid_argument("unknown pattern '" + name + "'");
}

std::string to_string(SweepDirection d) { return d == SweepDirection::l2r ? "l2r" : "r2l"; }

std::string to_string(SweepInit i) {
  switch (i) {
    case SweepInit::random_deltas: return "random_deltas";
    case SweepInit::perturbed_homogeneous: return "perturbed_homogeneous";
    case SweepInit::stripe_seeded: return "stripe_seeded";
  }
  return "random_deltas";
}

SweepDirection parse_direction(const std::string& name) {
  if (name == "l2r") return SweepDirection::l2r;
  if (name == "r2l") return SweepDirection::r2l;
  throw std::invalid_argument("sweep.direction must be l2r or r2l, got '" + name + "'");
}

SweepInit parse_init(const std::string& name) {
  for (auto i : {SweepInit::random_deltas, SweepInit::perturbed_homogeneous, SweepInit::stripe_seeded})
    if (to_string(i) == name) return i;
  throw std::invalid_argument("sweep.init must be random_deltas, perturbed_homogeneous or stripe_seeded, got '" +
                              name + "'");
}

// ---------------------------------------------------------------------------
// Patterns

std::vector<double> population_average(const FieldState& state) {
  auto m = mean_activity(state);
  for (double& v : m.total) v *= 0.25;
  return std::move(m.total);
}

namespace {

// Power |F(k)|^2 of the field minus its mean, full n x n table indexed by
// (k1 mod n, k2 mod n).
std::vector<double> power_spectrum(const TorusGrid& grid, std::span<const double> field) {
  const int n = grid.n;
  const int half = n / 2 + 1;
  const double mean = std::accumulate(field.begin(), field.end(), 0.0) / field.size();
  double* in = fftw_alloc_real(grid.cells());
  fftw_complex* out = fftw_alloc_complex(static_cast<std::size_t>(n) * half);
  fftw_plan plan = fftw_plan_dft_r2c_2d(n, n, in, out, FFTW_ESTIMATE);
  for (std::size_t i = 0; i < grid.cells(); ++i) in[i] = field[i] - mean;
  fftw_execute(plan);
  std::vector<double> power(grid.cells());
  for (int k1 = 0; k1 < n; ++k1)
    for (int k2 = 0; k2 < half; ++k2) {
      const auto& c = out[static_cast<std::size_t>(k1) * half + k2];
      const double p = c[0] * c[0] + c[1] * c[1];
      power[grid.index(k1, k2)] = p;
      power[grid.index(grid.wrap(-k1), grid.wrap(-k2))] = p;
    }
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return power;
}

struct ModePair {
  int k1, k2;
  double power;
};

}  // namespace

Pattern classify_pattern(const TorusGrid& grid, std::span<const double> field, const PatternThresholds& th) {
  if (field.size() != grid.cells()) throw std::invalid_argument("classify_pattern: field size must be n^2");
  const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
  if (*hi <= 0.0 || (*hi - *lo) / *hi < th.homogeneous_rel) return Pattern::homogeneous;

  const auto power = power_spectrum(grid, field);
  const int n = grid.n;
  auto signed_k = [n](int k) { return k >= n / 2 ? k - n : k; };
  std::vector<ModePair> pairs;
  double total = 0.0;
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) {
      const int k1 = signed_k(a), k2 = signed_k(b);
      if (k1 == 0 && k2 == 0) continue;
      const double p = power[grid.index(a, b)];
      total += p;
      // One representative per +-k pair; self-conjugate Nyquist modes count once.
      const std::size_t self = grid.index(a, b);
      const std::size_t mirror = grid.index(grid.wrap(-a), grid.wrap(-b));
      if (self == mirror) pairs.push_back({k1, k2, p});
      else if (self < mirror) pairs.push_back({k1, k2, 2.0 * p});
    }
  if (!(total > 0.0)) return Pattern::homogeneous;
  std::sort(pairs.begin(), pairs.end(), [](const ModePair& x, const ModePair& y) { return x.power > y.power; });
  if (pairs.front().power >= th.stripe_power * total) return Pattern::stripe;

  // Distinct directions among the pairs within peak_ratio of the top one.
  std::vector<ModePair> directions;
  for (const auto& p : pairs) {
    if (p.power * th.peak_ratio < pairs.front().power) break;
    const bool collinear = std::any_of(directions.begin(), directions.end(), [&](const ModePair& d) {
      return d.k1 * p.k2 - d.k2 * p.k1 == 0;
    });
    if (!collinear) directions.push_back(p);
  }
  if (directions.size() >= 3) return Pattern::hexagonal;
  if (directions.size() == 2) return Pattern::eye;
  return Pattern::other;
}

// ---------------------------------------------------------------------------
// Sweeps

void SweepConfig::validate() const {
  if (!(sigma_lo > 0.0)) throw std::invalid_argument("sweep.sigma_lo must be positive");
  if (!(sigma_hi > sigma_lo)) throw std::invalid_argument("sweep.sigma_hi must exceed sweep.sigma_lo");
  if (points < 3) throw std::invalid_argument("sweep.points must be >= 3");
  if (!(delta_fraction >= 0.0 && delta_fraction <= 1.0))
    throw std::invalid_argument("sweep.delta_fraction must lie in [0, 1]");
  if (!(perturbation >= 0.0)) throw std::invalid_argument("sweep.perturbation must be >= 0");
  if (!(stripe_width > 0.0 && stripe_width < 1.0)) throw std::invalid_argument("sweep.stripe_width must lie in (0, 1)");
}

std::vector<double> SweepConfig::sigmas() const {
  std::vector<double> s(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) s[i] = sigma_lo + (sigma_hi - sigma_lo) * i / (points - 1);
  if (direction == SweepDirection::r2l) std::reverse(s.begin(), s.end());
  return s;
}

FieldState sweep_initial_state(const TorusGrid& grid, const SGrid& sgrid, const SweepConfig& config,
                               const Activation& activation, double w0, double b, double sigma) {
  switch (config.init) {
    case SweepInit::random_deltas:
      return random_delta_state(grid, sgrid, config.delta_fraction, config.seed);
    case SweepInit::perturbed_homogeneous: {
      const auto hom = solve_stationary_on_grid(activation, w0, b, sigma, sgrid);
      FieldState st(grid, sgrid);
      std::mt19937_64 rng(config.seed);
      std::normal_distribution<double> normal(0.0, 1.0);
      for (int beta = 0; beta < 4; ++beta)
        for (int ix = 0; ix < grid.n; ++ix)
          for (int iy = 0; iy < grid.n; ++iy) {
            const auto col = gibbs_column(hom.state.phi0 + config.perturbation * normal(rng), sigma, sgrid);
            std::copy(col.begin(), col.end(), st.mutable_column(beta, ix, iy).begin());
          }
      return st;
    }
    case SweepInit::stripe_seeded: {
      FieldState st(grid, sgrid);
      const int on = sgrid.cell_of(1.0);
      const double height = 1.0 / sgrid.ds();
      for (int beta = 0; beta < 4; ++beta)
        for (int ix = 0; ix < grid.n; ++ix)
          for (int iy = 0; iy < grid.n; ++iy) {
            const double y = grid.center(iy);
            const bool band = y >= -0.5 * config.stripe_width && y < 0.5 * config.stripe_width;
            st.mutable_column(beta, ix, iy)[band ? on : 0] = height;
          }
      return st;
    }
  }
  throw std::logic_error("unhandled sweep init");
}

std::vector<BranchRecord> bifurcation_sweep_from(FokkerPlanckSolver& solver, FieldState state,
                                                 const SweepConfig& config, const BranchObserver& observer) {
  config.validate();
  std::vector<BranchRecord> branch;
  const auto sigmas = config.sigmas();
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    solver.set_sigma(sigmas[i]);
    state.t = 0.0;
    const auto report = solver.run_to_stationary(state);
    const auto field = population_average(state);
    const auto [lo, hi] = std::minmax_element(field.begin(), field.end());
    BranchRecord r;
    r.sigma = sigmas[i];
    r.max_mean = *hi;
    r.min_mean = *lo;
    r.pattern = classify_pattern(state.grid(), field, config.thresholds);
    r.stop_reason = report.stop_reason;
    r.final_time = report.final_time;
    branch.push_back(r);
    if (observer) observer(i, r, state);
  }
  return branch;
}

std::vector<BranchRecord> bifurcation_sweep(FokkerPlanckSolver& solver, const SGrid& sgrid,
                                            const SweepConfig& config, const BranchObserver& observer) {
  config.validate();
  const double first = config.sigmas().front();
  auto state = sweep_initial_state(solver.kernel().grid(), sgrid, config, solver.activation(), solver.kernel().w0(),
                                   solver.params().B, first);
  return bifurcation_sweep_from(solver, std::move(state), config, observer);
}

Transition detect_transition(std::span<const BranchRecord> branch, double factor) {
  Transition out;
  if (branch.size() < 3) return out;
  std::vector<double> change(branch.size() - 1);
  for (std::size_t i = 0; i + 1 < branch.size(); ++i) {
    const double a = branch[i].max_mean - branch[i].min_mean;
    const double b = branch[i + 1].max_mean - branch[i + 1].min_mean;
    change[i] = std::abs(b - a);
  }
  const auto top = std::max_element(change.begin(), change.end());
  auto sorted = change;
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  double median = sorted[sorted.size() / 2];
  if (sorted.size() % 2 == 0) {
    const double below = *std::max_element(sorted.begin(), sorted.begin() + sorted.size() / 2);
    median = 0.5 * (median + below);
  }
  if (!(*top > factor * median)) return out;
  const auto i = static_cast<std::size_t>(top - change.begin());
  out.found = true;
  out.sigma_star = 0.5 * (branch[i].sigma + branch[i + 1].sigma);
  out.jump = *top;
  out.spacing = std::abs(branch[i + 1].sigma - branch[i].sigma);
  return out;
}

// ---------------------------------------------------------------------------
// Replay

ReplayResult replay(FokkerPlanckSolver& solver, FieldState& state, const Trajectory& trajectory, ProbeCell probe,
                    double threshold, double duration_ms) {
  trajectory.validate();
  const auto& grid = state.grid();
  const int ix = probe.ix < 0 ? grid.n / 2 : probe.ix;
  const int iy = probe.iy < 0 ? grid.n / 2 : probe.iy;
  if (ix >= grid.n || iy >= grid.n || probe.beta < 0 || probe.beta > 3)
    throw std::invalid_argument("replay: probe cell outside the grid");
  const double alpha = solver.params().alpha;
  const double b = solver.params().B;
  const InputFunction input = [&](double t) { return external_input(t, trajectory, alpha, b); };
  const double stop = duration_ms < 0.0 ? trajectory.end() : std::min(trajectory.end(), trajectory.start() + duration_ms);

  ReplayResult out;
  state.t = trajectory.start();
  for (std::size_t i = 0; i < trajectory.size() && trajectory.t[i] <= stop; ++i) {
    const double t = trajectory.t[i];
    if (t > state.t) solver.advance(state, t, input);
    const auto args = solver.firing_argument(state, input(t));
    const double rate = solver.activation()(args[probe.beta][grid.index(ix, iy)]);
    ++out.samples;
    if (rate > threshold) out.events.push_back({t, trajectory.x[i], trajectory.y[i], rate});
  }
  return out;
}

std::vector<std::size_t> event_clusters(std::span<const FiringEvent> events, double link_cm) {
  const std::size_t n = events.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  // Bucket by cells of side link_cm so only neighbouring buckets are compared.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto cell = [&](std::size_t i) {
    return std::pair{static_cast<long>(std::floor(events[i].x / link_cm)),
                     static_cast<long>(std::floor(events[i].y / link_cm))};
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cell(a) < cell(b); });
  for (std::size_t a = 0; a < n; ++a) {
    const auto ca = cell(order[a]);
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto cb = cell(order[b]);
      if (cb.first > ca.first + 1) break;
      if (std::abs(cb.second - ca.second) > 1) continue;
      const auto& p = events[order[a]];
      const auto& q = events[order[b]];
      if (std::hypot(p.x - q.x, p.y - q.y) <= link_cm) parent[find(order[a])] = find(order[b]);
    }
  }
  std::vector<std::size_t> size(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++size[find(i)];
  std::vector<std::size_t> out;
  for (auto s : size)
    if (s > 0) out.push_back(s);
  std::sort(out.rbegin(), out.rend());
  return out;
}

// ---------------------------------------------------------------------------
// Refinement

FieldState refinement_initial_state(const RefinementConfig& config) {
  return random_delta_state(TorusGrid(config.n_ref), SGrid(config.n_ref, config.s_max), config.delta_fraction,
                            config.seed);
}

FieldState block_average(const FieldState& fine, int factor) {
  const int n = fine.grid().n;
  const int n_s = fine.sgrid().n_s;
  if (factor < 1 || n % factor != 0 || n_s % factor != 0)
    throw std::invalid_argument("block_average: factor must divide n and n_s");
  const TorusGrid cg(n / factor);
  const SGrid cs(n_s / factor, fine.sgrid().s_max);
  FieldState coarse(cg, cs);
  const double w = 1.0 / (static_cast<double>(factor) * factor * factor);
  auto out = coarse.mutable_data();
  for (int beta = 0; beta < 4; ++beta)
    for (int ix = 0; ix < n; ++ix)
      for (int iy = 0; iy < n; ++iy) {
        const auto col = fine.column(beta, ix, iy);
        double* dst = out.data() + coarse.column_offset(beta, ix / factor, iy / factor);
        for (int j = 0; j < n_s; ++j) dst[j / factor] += w * col[j];
      }
  coarse.t = fine.t;
  return coarse;
}

std::vector<double> block_average_field(const TorusGrid& fine, std::span<const double> field, int factor) {
  if (factor < 1 || fine.n % factor != 0) throw std::invalid_argument("block_average_field: factor must divide n");
  const TorusGrid cg(fine.n / factor);
  std::vector<double> out(cg.cells(), 0.0);
  const double w = 1.0 / (static_cast<double>(factor) * factor);
  for (int ix = 0; ix < fine.n; ++ix)
    for (int iy = 0; iy < fine.n; ++iy) out[cg.index(ix / factor, iy / factor)] += w * field[fine.index(ix, iy)];
  return out;
}

std::vector<RefinementRow> refinement_study(const KernelParams& kernel_params, ShiftSet shifts,
                                            const Activation& activation, const SolverParams& params,
                                            const RefinementConfig& config, int threads) {
  if (config.n_list.empty()) throw std::invalid_argument("refinement: n_list is empty");
  if (!std::is_sorted(config.n_list.begin(), config.n_list.end()))
    throw std::invalid_argument("refinement: n_list must ascend");
  for (int n : config.n_list)
    if (n > config.n_ref || config.n_ref % n != 0)
      throw std::invalid_argument("refinement: every level must divide n_ref");

  auto run = [&](FieldState& st) {
    FokkerPlanckSolver solver(sample_kernel(st.grid(), kernel_params), shifts, activation, params, threads);
    solver.advance(st, config.t_eval, [&](double) { return constant_input(params.B); });
    return population_average(st);
  };

  std::vector<FieldState> coarse;
  std::vector<double> reference;
  {
    auto fine = refinement_initial_state(config);
    for (int n : config.n_list) coarse.push_back(block_average(fine, config.n_ref / n));
    reference = run(fine);
  }
  const TorusGrid ref_grid(config.n_ref);
  std::vector<RefinementRow> rows;
  for (std::size_t level = 0; level < coarse.size(); ++level) {
    const int n = config.n_list[level];
    const auto field = run(coarse[level]);
    const auto ref = block_average_field(ref_grid, reference, config.n_ref / n);
    RefinementRow row;
    row.n = n;
    const double area = 1.0 / (static_cast<double>(n) * n);
    for (std::size_t i = 0; i < field.size(); ++i) {
      const double d = field[i] - ref[i];
      row.l1 += std::abs(d) * area;
      row.l2 += d * d * area;
    }
    row.l2 = std::sqrt(row.l2);
    if (!rows.empty()) {
      const double r = std::log(static_cast<double>(n) / rows.back().n);
      row.ooc_l1 = std::log(rows.back().l1 / row.l1) / r;
      row.ooc_l2 = std::log(rows.back().l2 / row.l2) / r;
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Relaxation

std::vector<double> relaxation_initial_density(const SGrid& sgrid, int points, std::uint64_t seed) {
  if (points < 1 || points > sgrid.n_s) throw std::invalid_argument("relaxation: points must lie in [1, n_s]");
  std::vector<int> cells(static_cast<std::size_t>(sgrid.n_s));
  std::iota(cells.begin(), cells.end(), 0);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < points; ++i) {
    std::uniform_int_distribution<int> pick(i, sgrid.n_s - 1);
    std::swap(cells[i], cells[pick(rng)]);
  }
  std::vector<double> f(static_cast<std::size_t>(sgrid.n_s), 0.0);
  const double value = 1.0 / (points * sgrid.ds());
  for (int i = 0; i < points; ++i) f[cells[i]] = value;
  return f;
}

double decay_rate(std::span<const double> t, std::span<const double> err, double floor) {
  double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(err[i] >= floor)) break;
    const double y = std::log(err[i]);
    st += t[i];
    sy += y;
    stt += t[i] * t[i];
    sty += t[i] * y;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double slope = (n * sty - st * sy) / (n * stt - st * st);
  return -slope;
}

RelaxationSummary relaxation_study(int runs, std::uint64_t seed, const SolverParams& params,
                                   const RelaxationConfig& config) {
  if (runs < 1) throw std::invalid_argument("relaxation: runs must be >= 1");
  const SGrid sgrid(config.n_s, config.s_max);
  const auto act = Activation::smooth_eps(config.epsilon);
  RelaxationSummary out;
  out.target = solve_stationary_on_grid(act, config.w0, params.B, params.sigma, sgrid);
  const auto& target = out.target.density;
  const double target_mean = out.target.state.mean;

  for (int r = 0; r < runs; ++r) {
    RelaxationRun run;
    run.seed = seed + static_cast<std::uint64_t>(r);
    HomogeneousSolver1D solver(sgrid, act, config.w0, params);
    solver.set_density(relaxation_initial_density(sgrid, config.points, run.seed));
    auto record = [&] {
      double d = 0.0;
      const auto f = solver.density();
      for (int j = 0; j < sgrid.n_s; ++j) d += std::abs(f[j] - target[j]) * sgrid.ds();
      run.t.push_back(solver.t());
      run.l1.push_back(d);
      run.mean_diff.push_back(std::abs(solver.mean() - target_mean));
      if (d <= 1e-8 && !std::isfinite(run.t_l1_below_1e8)) run.t_l1_below_1e8 = solver.t();
    };
    record();
    const auto samples = static_cast<int>(std::lround(config.t_end / config.sample_ms));
    for (int k = 1; k <= samples; ++k) {
      solver.advance(k * config.sample_ms);
      record();
    }
    run.final_l1 = run.l1.back();
    run.slope_l1 = decay_rate(run.t, run.l1, config.fit_floor);
    run.slope_mean = decay_rate(run.t, run.mean_diff, config.fit_floor);
    out.mean_slope_l1 += run.slope_l1 / runs;
    out.mean_slope_mean += run.slope_mean / runs;
    out.runs.push_back(std::move(run));
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << header << '\n' << std::setprecision(12);
  return out;
}

}  // namespace

void write_branch_csv(const std::filesystem::path& path, std::span<const BranchRecord> branch) {
  auto out = open_csv(path, "sigma,max_mean,min_mean,pattern,stop_reason,final_time");
  for (const auto& r : branch)
    out << r.sigma << ',' << r.max_mean << ',' << r.min_mean << ',' << to_string(r.pattern) << ',' << r.stop_reason
        << ',' << r.final_time << '\n';
}

std::vector<BranchRecord> read_branch_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "sigma,max_mean,min_mean,pattern,stop_reason,final_time")
    throw std::runtime_error(path.string() + ": unexpected branch header");
  std::vector<BranchRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell[6];
    for (auto& c : cell) std::getline(row, c, ',');
    BranchRecord r;
    r.sigma = std::stod(cell[0]);
    r.max_mean = std::stod(cell[1]);
    r.min_mean = std::stod(cell[2]);
    r.pattern = parse_pattern(cell[3]);
    r.stop_reason = cell[4];
    r.final_time = std::stod(cell[5]);
    out.push_back(r);
  }
  return out;
}

void write_events_csv(const std::filesystem::path& path, std::span<const FiringEvent> events) {
  auto out = open_csv(path, "t_ms,x_cm,y_cm,rate");
  for (const auto& e : events) out << e.t << ',' << e.x << ',' << e.y << ',' << e.rate << '\n';
}

void write_refinement_csv(const std::filesystem::path& path, std::span<const RefinementRow> rows) {
  auto out = open_csv(path, "n,L1,L2,OOC_L1,OOC_L2");
  for (const auto& r : rows) {
    out << r.n << ',' << r.l1 << ',' << r.l2 << ',';
    if (std::isfinite(r.ooc_l1)) out << r.ooc_l1;
    out << ',';
    if (std::isfinite(r.ooc_l2)) out << r.ooc_l2;
    out << '\n';
  }
}

void write_relaxation_csv(const std::filesystem::path& path, const RelaxationSummary& summary) {
  auto out = open_csv(path, "t_ms,seed,l1,mean_diff");
  for (const auto& run : summary.runs)
    for (std::size_t i = 0; i < run.t.size(); ++i)
      out << run.t[i] << ',' << run.seed << ',' << run.l1[i] << ',' << run.mean_diff[i] << '\n';
}

}  // namespace gridfield
