#include "commands.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>

#include "config.hpp"
#include "gridfield/experiments.hpp"
#include "gridfield/homogeneous.hpp"
#include "gridfield/microscopic.hpp"
#include "gridfield/parallel.hpp"
#include "gridfield/stability.hpp"

namespace gridfield::cli {

namespace fs = std::filesystem;

namespace {

// Output directory plus the manifest of everything written into it.
class Outputs {
 public:
  explicit Outputs(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

  fs::path add(const std::string& name, const std::string& description) {
    entries_.emplace_back(name, description);
    return dir_ / name;
  }

  std::ofstream csv(const std::string& name, const std::string& description, const std::string& header) {
    std::ofstream out(add(name, description));
    if (!out) throw std::runtime_error("cannot write " + (dir_ / name).string());
    out << header << '\n' << std::setprecision(12);
    return out;
  }

  void write_manifest() const {
    std::ofstream out(dir_ / "manifest.csv");
    out << "file,description\n";
    for (const auto& [name, what] : entries_) out << name << ',' << what << '\n';
    out << "manifest.csv,this list\n";
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

struct Context {
  RunConfig config;
  int threads = 1;
  Outputs* out = nullptr;

  Kernel kernel() const { return sample_kernel(config.torus(), config.kernel); }
  Activation activation() const { return config.activation.build(); }
};

std::string padded(std::size_t i, int width = 5) {
  std::ostringstream s;
  s << std::setw(width) << std::setfill('0') << i;
  return s.str();
}

void write_mean_field(Outputs& out, const std::string& name, const FieldState& state) {
  auto csv = out.csv(name, "population-averaged mean activity per cell", "ix,iy,x,y,mean");
  const auto field = population_average(state);
  const auto& g = state.grid();
  for (int ix = 0; ix < g.n; ++ix)
    for (int iy = 0; iy < g.n; ++iy)
      csv << ix << ',' << iy << ',' << g.center(ix) << ',' << g.center(iy) << ',' << field[g.index(ix, iy)] << '\n';
}

// ---------------------------------------------------------------------------

struct StationaryArgs {
  std::vector<double> sigmas;
  bool density = false;
};

void cmd_stationary(Context& ctx, const StationaryArgs& a) {
  const auto sigmas = a.sigmas.empty() ? std::vector<double>{ctx.config.solver.sigma} : a.sigmas;
  const auto kernel = ctx.kernel();
  const auto act = ctx.activation();
  const auto sg = ctx.config.sgrid();
  const double b = ctx.config.solver.B;
  auto csv = ctx.out->csv("stationary.csv", "homogeneous stationary states per sigma",
                          "sigma,w0,phi0,mean,Z,log_Z,m_inf,sigma_over_m_inf,residual,grid_mean");
  std::optional<std::ofstream> dens;
  if (a.density)
    dens = ctx.out->csv("stationary_density.csv", "f_inf at the activity cell centres", "sigma,s,f");
  for (double sigma : sigmas) {
    if (!(sigma > 0.0)) throw std::invalid_argument("--sigmas: every sigma must be positive");
    const auto hom = solve_stationary(act, kernel.w0(), b, sigma);
    const auto grid = solve_stationary_on_grid(act, kernel.w0(), b, sigma, sg);
    csv << sigma << ',' << kernel.w0() << ',' << hom.phi0 << ',' << hom.mean << ',' << hom.Z << ',' << hom.log_z << ','
        << hom.m_inf << ','
        << sigma / hom.m_inf << ',' << hom.residual << ',' << grid.state.mean << '\n';
    if (dens)
      for (int j = 0; j < sg.n_s; ++j) *dens << sigma << ',' << sg.center(j) << ',' << density_at(hom, sg.center(j)) << '\n';
  }
}

// ---------------------------------------------------------------------------

struct StabilityArgs {
  std::optional<int> k_max;
  std::optional<double> sigma_lo, sigma_hi;
  bool critical = true;
  bool kernel_csv = false;
};

void cmd_stability(Context& ctx, const StabilityArgs& a) {
  const auto kernel = ctx.kernel();
  const auto act = ctx.activation();
  const auto& s = ctx.config.solver;
  const ShiftSet shifts = ctx.config.shift;
  if (a.kernel_csv) {
    auto csv = ctx.out->csv("kernel.csv", "kernel samples W(x) on the grid", "ix,iy,x,y,w");
    const auto& g = kernel.grid();
    for (int ix = 0; ix < g.n; ++ix)
      for (int iy = 0; iy < g.n; ++iy)
        csv << ix << ',' << iy << ',' << g.center(ix) << ',' << g.center(iy) << ',' << kernel.sample(ix, iy) << '\n';
  }
  const int k_max = a.k_max.value_or(std::min(10, kernel.spectral().k_max()));
  const auto hom = solve_stationary(act, kernel.w0(), s.B, s.sigma);
  const auto table = dispersion(kernel, shifts, hom, act, k_max);
  {
    auto csv = ctx.out->csv("dispersion.csv", "F(k) over the lattice", "k1,k2,w_hat,shift,F");
    for (const auto& e : table.entries)
      csv << e.k1 << ',' << e.k2 << ',' << e.w_hat << ',' << e.shift << ',' << e.F << '\n';
  }
  auto csv = ctx.out->csv("stability.csv", "stability summary", "key,value");
  const auto verdict = zero_noise_stable(table);
  csv << "sigma," << s.sigma << '\n'
      << "w0," << kernel.w0() << '\n'
      << "phi0_prime," << table.phi0_prime << '\n'
      << "max_F," << table.max_F() << '\n'
      << "sigma_over_m_inf," << 1.0 / table.m_inf_over_sigma << '\n'
      << "noisy_indicator," << table.max_F() * table.m_inf_over_sigma - 1.0 << '\n'
      << "zero_noise_stable," << (verdict.stable ? 1 : 0) << '\n'
      << "worst_k1," << verdict.worst.k1 << '\n'
      << "worst_k2," << verdict.worst.k2 << '\n';
  for (const auto& m : dominant_modes(table)) csv << "dominant_mode," << m.k1 << ' ' << m.k2 << '\n';
  if (!a.critical) return;
  const double lo = a.sigma_lo.value_or(1e-3);
  const double hi = a.sigma_hi.value_or(0.1);
  CriticalSigmaOptions opt;
  opt.k_max = k_max;
  try {
    csv << "sigma_c," << critical_sigma(kernel, shifts, act, s.B, lo, hi, opt) << '\n';
  } catch (const NoCrossingError& e) {
    csv << "sigma_c,\n";
    csv.flush();
    throw NonConvergence(e.what());
  }
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::optional<std::string> init;
  std::optional<double> t_end;
  bool to_stationary = false;
  double dump_every = 0.0;
  double sample_every = 10.0;
};

void cmd_simulate(Context& ctx, const SimulateArgs& a) {
  const auto kernel = ctx.kernel();
  const auto act = ctx.activation();
  auto cfg = ctx.config.sweep;
  if (a.init) cfg.init = parse_init(*a.init);
  const auto& p = ctx.config.solver;
  auto state = sweep_initial_state(kernel.grid(), ctx.config.sgrid(), cfg, act, kernel.w0(), p.B, p.sigma);
  FokkerPlanckSolver solver(kernel, ctx.config.shift, act, p, ctx.threads);
  const auto input = [b = p.B](double) { return constant_input(b); };
  if (!(a.sample_every > 0.0)) throw std::invalid_argument("--sample-every must be positive");
  if (a.dump_every < 0.0) throw std::invalid_argument("--dump-every must be >= 0");

  auto means = ctx.out->csv("simulate_means.csv", "population-averaged mean over time", "t_ms,mean,max_mean,min_mean");
  auto sample = [&] {
    const auto f = population_average(state);
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    double avg = 0.0;
    for (double v : f) avg += v / f.size();
    means << state.t << ',' << avg << ',' << *hi << ',' << *lo << '\n';
  };
  std::size_t dumps = 0;
  auto dump = [&] { write_state(ctx.out->add("dump_" + padded(dumps++) + ".gcnf", "state dump"), state); };

  std::string stop = "t_end";
  if (a.to_stationary) {
    double next_sample = a.sample_every;
    double next_dump = a.dump_every > 0.0 ? a.dump_every : std::numeric_limits<double>::infinity();
    sample();
    const auto report = solver.run_to_stationary(state, [&](const FieldState& st, const StepInfo&) {
      if (st.t >= next_sample) {
        sample();
        next_sample += a.sample_every;
      }
      if (st.t >= next_dump) {
        dump();
        next_dump += a.dump_every;
      }
    });
    stop = report.stop_reason;
  } else {
    const double t_end = a.t_end.value_or(p.t_min);
    double next_sample = a.sample_every;
    double next_dump = a.dump_every > 0.0 ? a.dump_every : std::numeric_limits<double>::infinity();
    sample();
    while (state.t < t_end) {
      const double mark = std::min({next_sample, next_dump, t_end});
      solver.advance(state, mark, input);
      if (state.t >= next_sample) {
        sample();
        next_sample += a.sample_every;
      }
      if (state.t >= next_dump) {
        dump();
        next_dump += a.dump_every;
      }
    }
  }
  means.flush();
  write_state(ctx.out->add("final.gcnf", "final state"), state);
  write_slice_csv(ctx.out->add("final_slice_s0.csv", "f(x, y, s = 0) per population"), state, 0.0);
  write_mean_field(*ctx.out, "final_mean_field.csv", state);
  const auto f = population_average(state);
  auto summary = ctx.out->csv("simulate_summary.csv", "final pattern and stop reason", "key,value");
  summary << "final_time," << state.t << "\npattern," << to_string(classify_pattern(state.grid(), f, cfg.thresholds))
          << "\nstop_reason," << stop << '\n';
  summary.flush();
  if (stop == "max-time") throw NonConvergence("simulate: not stationary by solver.t_max");
}

// ---------------------------------------------------------------------------

struct BifurcateArgs {
  std::optional<std::string> direction, init;
  std::optional<int> points;
  bool dumps = true;
  bool paper_scale = false;
};

void cmd_bifurcate(Context& ctx, const BifurcateArgs& a) {
  auto cfg = ctx.config.sweep;
  if (a.direction) cfg.direction = parse_direction(*a.direction);
  if (a.init) cfg.init = parse_init(*a.init);
  if (a.points) cfg.points = *a.points;
  if (a.paper_scale) cfg.points = std::max(cfg.points, 100);
  cfg.validate();
  const auto kernel = ctx.kernel();
  const auto act = ctx.activation();
  const auto sg = ctx.config.sgrid();
  FokkerPlanckSolver solver(kernel, ctx.config.shift, act, ctx.config.solver, ctx.threads);
  const std::string tag = to_string(cfg.direction);

  {
    auto ref = ctx.out->csv("homogeneous_reference.csv", "homogeneous stationary mean along the sweep", "sigma,mean");
    for (double s : cfg.sigmas()) ref << s << ',' << solve_stationary(act, kernel.w0(), ctx.config.solver.B, s).mean << '\n';
  }
  const auto branch = bifurcation_sweep(solver, sg, cfg, [&](std::size_t i, const BranchRecord& r, const FieldState& st) {
    std::cerr << tag << " sigma=" << r.sigma << " max=" << r.max_mean << " min=" << r.min_mean << ' '
              << to_string(r.pattern) << ' ' << r.stop_reason << '\n';
    if (a.dumps) write_state(ctx.out->add("branch_" + tag + "_" + padded(i, 3) + ".gcnf", "converged state"), st);
  });
  write_branch_csv(ctx.out->add("branch_" + tag + ".csv", "branch records"), branch);
  const auto t = detect_transition(branch);
  auto csv = ctx.out->csv("transition_" + tag + ".csv", "detected transition", "direction,found,sigma_star,jump,spacing,points,scale");
  csv << tag << ',' << (t.found ? 1 : 0) << ',' << t.sigma_star << ',' << t.jump << ',' << t.spacing << ','
      << branch.size() << ',' << (branch.size() < 100 ? "desk" : "paper") << '\n';
}

// ---------------------------------------------------------------------------

struct ReplayArgs {
  std::optional<std::string> trajectory;
  double synth_duration = 300000.0;
  std::optional<double> stabilize;
  double duration = -1.0;
  int probe_ix = -1, probe_iy = -1, probe_beta = 0;
  double threshold = 0.0;
  double link_cm = 5.0;
};

void cmd_replay(Context& ctx, const ReplayArgs& a) {
  Trajectory tr;
  if (a.trajectory) {
    tr = read_trajectory_csv(*a.trajectory);
  } else {
    SynthTrajectoryParams sp;
    sp.duration_ms = a.synth_duration;
    tr = synth_trajectory(sp, ctx.config.seed);
    write_trajectory_csv(ctx.out->add("trajectory.csv", "synthetic trajectory"), tr);
  }
  tr.validate();
  const auto kernel = ctx.kernel();
  const auto act = ctx.activation();
  auto p = ctx.config.solver;
  auto state = sweep_initial_state(kernel.grid(), ctx.config.sgrid(), ctx.config.sweep, act, kernel.w0(), p.B, p.sigma);
  {
    auto still = p;
    still.alpha = 0.0;
    FokkerPlanckSolver solver(kernel, ctx.config.shift, act, still, ctx.threads);
    solver.advance(state, a.stabilize.value_or(p.t_min), [b = p.B](double) { return constant_input(b); });
  }
  write_mean_field(*ctx.out, "stabilized_mean_field.csv", state);
  FokkerPlanckSolver solver(kernel, ctx.config.shift, act, p, ctx.threads);
  const auto result = replay(solver, state, tr, ProbeCell{a.probe_ix, a.probe_iy, a.probe_beta}, a.threshold, a.duration);
  write_events_csv(ctx.out->add("events.csv", "firing events of the probe cell"), result.events);
  write_state(ctx.out->add("final.gcnf", "state after the replay"), state);
  write_slice_csv(ctx.out->add("final_slice_s0.csv", "f(x, y, s = 0) per population"), state, 0.0);
  const auto clusters = event_clusters(result.events, a.link_cm);
  auto csv = ctx.out->csv("replay_summary.csv", "replay counts", "key,value");
  csv << "samples," << result.samples << "\nevents," << result.events.size() << "\nfiring_fraction,"
      << result.firing_fraction() << "\nclusters," << clusters.size() << "\nlink_cm," << a.link_cm << '\n';
}

// ---------------------------------------------------------------------------

struct ParticlesArgs {
  std::size_t columns = 1;
  std::size_t m = 10000;
  double dt = 0.05;
  double t_end = 500.0;
  int bins = 26;
  double s0 = 0.0;
  double sample_every = 1.0;
};

void cmd_particles(Context& ctx, const ParticlesArgs& a) {
  const auto act = ctx.activation();
  const auto& s = ctx.config.solver;
  ParticleParams pp{s.tau, s.sigma, s.B};
  const Kernel kernel = ctx.kernel();
  std::optional<ParticleCoupling> coupling;
  int populations = 1;
  if (a.columns == 1) {
    coupling = ParticleCoupling::all_to_all(kernel.w0());
  } else {
    if (a.columns != kernel.grid().cells())
      throw std::invalid_argument("--columns must be 1 (all-to-all) or grid.n^2 (spatial)");
    coupling = ParticleCoupling::spatial(kernel, ctx.config.shift);
    populations = 4;
  }
  ParticleEnsemble e(populations, a.columns, a.m, ctx.config.seed, ctx.threads, a.s0);
  ParticleSimulator sim(act, std::move(*coupling), pp);
  auto means = ctx.out->csv("particle_means.csv", "empirical means over time", "t_ms,mean,min_column_mean,max_column_mean");
  auto sample = [&] {
    const auto m = e.means();
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    double avg = 0.0;
    for (double v : m) avg += v / m.size();
    means << e.t << ',' << avg << ',' << *lo << ',' << *hi << '\n';
  };
  sample();
  double next = a.sample_every;
  while (e.t < a.t_end - 1e-9) {
    sim.advance(e, std::min(next, a.t_end), a.dt);
    sample();
    next += a.sample_every;
  }
  const auto h = empirical_density(e, a.bins, ctx.config.grid.s_max);
  const std::size_t groups = h.size() / a.bins;
  const double width = ctx.config.grid.s_max / a.bins;
  std::optional<HomogeneousState> hom;
  if (a.columns == 1 && s.sigma > 0.0) hom = solve_stationary(act, kernel.w0(), s.B, s.sigma);
  auto csv = ctx.out->csv("particle_histogram.csv", "final empirical density averaged over columns",
                          "bin,s_lo,s_hi,density,f_inf_centre");
  for (int b = 0; b < a.bins; ++b) {
    double v = 0.0;
    for (std::size_t g = 0; g < groups; ++g) v += h[g * a.bins + b] / groups;
    csv << b << ',' << b * width << ',' << (b + 1) * width << ',' << v << ',';
    if (hom) csv << density_at(*hom, (b + 0.5) * width);
    csv << '\n';
  }
}

// ---------------------------------------------------------------------------

struct RefineArgs {
  std::vector<int> levels{32, 64, 128};
  int n_ref = 256;
  double t_eval = 50.0;
};

void cmd_refine(Context& ctx, const RefineArgs& a) {
  RefinementConfig rc;
  rc.n_list = a.levels;
  rc.n_ref = a.n_ref;
  rc.t_eval = a.t_eval;
  rc.s_max = ctx.config.grid.s_max;
  rc.delta_fraction = ctx.config.sweep.delta_fraction;
  rc.seed = ctx.config.seed;
  const auto rows = refinement_study(ctx.config.kernel, ctx.config.shift, ctx.activation(), ctx.config.solver, rc,
                                     ctx.threads);
  write_refinement_csv(ctx.out->add("refinement.csv", "errors against the finest grid"), rows);
}

// ---------------------------------------------------------------------------

struct RelaxArgs {
  int runs = 20;
  double t_end = 300.0;
  int n_s = 512;
  double s_max = 3.0;
  int points = 51;
  double w0 = -20.6711;
};

void cmd_relax(Context& ctx, const RelaxArgs& a) {
  RelaxationConfig rc;
  rc.n_s = a.n_s;
  rc.s_max = a.s_max;
  rc.points = a.points;
  rc.t_end = a.t_end;
  rc.w0 = a.w0;
  rc.epsilon = ctx.config.activation.epsilon;
  auto params = ctx.config.solver;
  const auto summary = relaxation_study(a.runs, ctx.config.seed, params, rc);
  write_relaxation_csv(ctx.out->add("relaxation.csv", "error series per run"), summary);
  {
    auto csv = ctx.out->csv("relaxation_summary.csv", "fitted decay rates per run (1/ms)",
                            "seed,slope_mean,slope_l1,t_l1_below_1e8,final_l1");
    for (const auto& r : summary.runs)
      csv << r.seed << ',' << r.slope_mean << ',' << r.slope_l1 << ',' << r.t_l1_below_1e8 << ',' << r.final_l1 << '\n';
    csv << "mean," << summary.mean_slope_mean << ',' << summary.mean_slope_l1 << ",,\n";
  }
  // Final profile of the first run next to both fixed points.
  const SGrid sg(rc.n_s, rc.s_max);
  const auto act = Activation::smooth_eps(rc.epsilon);
  HomogeneousSolver1D solver(sg, act, rc.w0, params);
  solver.set_density(relaxation_initial_density(sg, rc.points, ctx.config.seed));
  solver.advance(rc.t_end);
  const auto hom = solve_stationary(act, rc.w0, params.B, params.sigma);
  auto csv = ctx.out->csv("relaxation_profile.csv", "final density of the first run and f_inf", "s,f,f_inf_grid,f_inf");
  for (int j = 0; j < sg.n_s; ++j)
    csv << sg.center(j) << ',' << solver.density()[j] << ',' << summary.target.density[j] << ','
        << density_at(hom, sg.center(j)) << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Noisy grid-cell neural field: stationary states, stability, simulation and studies"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::string> config_file;
  std::vector<std::string> overrides;
  std::optional<std::string> output_dir;
  int threads = 0;
  app.add_option("-c,--config", config_file, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "Override a config entry, e.g. --set solver.sigma=0.02")
      ->allow_extra_args(false);
  app.add_option("-o,--output", output_dir, "Output directory (overrides output_dir)");
  app.add_option("--threads", threads, "Worker threads (default: GRIDFIELD_THREADS or 1)");

  StationaryArgs st;
  auto* c_st = app.add_subcommand("stationary", "Homogeneous stationary states over sigma");
  c_st->add_option("--sigmas", st.sigmas, "Comma-separated noise values")->delimiter(',');
  c_st->add_flag("--density", st.density, "Also write f_inf profiles");

  StabilityArgs sb;
  auto* c_sb = app.add_subcommand("stability", "Dispersion table and critical noise");
  c_sb->add_option("--k-max", sb.k_max, "Lattice range (default: 10 or the kernel table size)");
  c_sb->add_option("--sigma-lo", sb.sigma_lo, "Lower end of the critical-noise search");
  c_sb->add_option("--sigma-hi", sb.sigma_hi, "Upper end of the critical-noise search");
  c_sb->add_flag("!--no-critical", sb.critical, "Skip the critical-noise search");
  c_sb->add_flag("--kernel", sb.kernel_csv, "Also write the kernel samples");

  SimulateArgs sm;
  auto* c_sm = app.add_subcommand("simulate", "Time evolution of the four-population system");
  c_sm->add_option("--init", sm.init, "random_deltas, perturbed_homogeneous or stripe_seeded");
  c_sm->add_option("--t-end", sm.t_end, "End time in ms (default solver.t_min)");
  c_sm->add_flag("--to-stationary", sm.to_stationary, "Stop by the stationarity rule instead of --t-end");
  c_sm->add_option("--dump-every", sm.dump_every, "GCNF1 dump cadence in ms (0: none)");
  c_sm->add_option("--sample-every", sm.sample_every, "Mean sampling cadence in ms");

  BifurcateArgs bf;
  auto* c_bf = app.add_subcommand("bifurcate", "Continuation sweep in sigma");
  c_bf->add_option("--direction", bf.direction, "l2r or r2l");
  c_bf->add_option("--init", bf.init, "Initial data of the first point");
  c_bf->add_option("--points", bf.points, "Number of sigma values");
  c_bf->add_flag("!--no-dumps", bf.dumps, "Skip the per-point state dumps");
  c_bf->add_flag("--paper-scale", bf.paper_scale, "64 x 64 x 64 grid and at least 100 sigma points");

  ReplayArgs rp;
  auto* c_rp = app.add_subcommand("replay", "Drive the network along a trajectory and record probe firing");
  c_rp->add_option("--trajectory", rp.trajectory, "CSV t_ms,x_cm,y_cm (default: synthetic)")->check(CLI::ExistingFile);
  c_rp->add_option("--synth-duration", rp.synth_duration, "Synthetic trajectory length in ms");
  c_rp->add_option("--stabilize", rp.stabilize, "Pre-run without drive in ms (default solver.t_min)");
  c_rp->add_option("--duration", rp.duration, "Replay only this many ms");
  c_rp->add_option("--probe-ix", rp.probe_ix, "Probe cell x index (default n/2)");
  c_rp->add_option("--probe-iy", rp.probe_iy, "Probe cell y index (default n/2)");
  c_rp->add_option("--probe-beta", rp.probe_beta, "Probe population 0..3 (N, W, S, E)");
  c_rp->add_option("--threshold", rp.threshold, "Firing threshold on Phi");
  c_rp->add_option("--link-cm", rp.link_cm, "Clustering distance for the summary");

  ParticlesArgs pa;
  auto* c_pa = app.add_subcommand("particles", "Interacting particle system");
  c_pa->add_option("--N,--columns", pa.columns, "Columns: 1 (all-to-all) or grid.n^2");
  c_pa->add_option("--M,--per-column", pa.m, "Particles per column");
  c_pa->add_option("--dt", pa.dt, "Time step in ms");
  c_pa->add_option("--T,--t-end", pa.t_end, "End time in ms");
  c_pa->add_option("--bins", pa.bins, "Histogram bins on [0, grid.s_max]");
  c_pa->add_option("--s0", pa.s0, "Initial activity of every particle");
  c_pa->add_option("--sample-every", pa.sample_every, "Mean sampling cadence in ms");

  RefineArgs rf;
  auto* c_rf = app.add_subcommand("refine", "Grid refinement against a fine reference");
  c_rf->add_option("--levels", rf.levels, "Comma-separated coarse sizes")->delimiter(',');
  c_rf->add_option("--n-ref", rf.n_ref, "Reference size");
  c_rf->add_option("--t-eval", rf.t_eval, "Comparison time in ms");

  RelaxArgs rx;
  auto* c_rx = app.add_subcommand("relax", "Relaxation of the homogeneous problem from random data");
  c_rx->add_option("--runs", rx.runs, "Number of seeded runs");
  c_rx->add_option("--t-end", rx.t_end, "End time in ms");
  c_rx->add_option("--n-s", rx.n_s, "Activity cells");
  c_rx->add_option("--s-max", rx.s_max, "Activity interval end");
  c_rx->add_option("--points", rx.points, "Occupied cells of the initial data");
  c_rx->add_option("--w0", rx.w0, "Total connectivity W0");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  std::optional<Outputs> outputs;
  try {
    Context ctx;
    ctx.config = parse_config(config_file ? std::optional<fs::path>(*config_file) : std::nullopt, overrides);
    if (output_dir) ctx.config.output_dir = *output_dir;
    if (*c_bf && bf.paper_scale) {
      ctx.config.grid.n = 64;
      ctx.config.grid.n_s = 64;
      ctx.config.sweep.points = std::max(ctx.config.sweep.points, 100);
    }
    ctx.threads = resolve_threads(threads);
    outputs.emplace(ctx.config.output_dir);
    ctx.out = &*outputs;
    {
      std::ofstream echo(outputs->add("config.json", "effective configuration"));
      echo << to_json(ctx.config).dump(2) << '\n';
    }

    if (*c_st) cmd_stationary(ctx, st);
    else if (*c_sb) cmd_stability(ctx, sb);
    else if (*c_sm) cmd_simulate(ctx, sm);
    else if (*c_bf) cmd_bifurcate(ctx, bf);
    else if (*c_rp) cmd_replay(ctx, rp);
    else if (*c_pa) cmd_particles(ctx, pa);
    else if (*c_rf) cmd_refine(ctx, rf);
    else if (*c_rx) cmd_relax(ctx, rx);
    outputs->write_manifest();
    return ok;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    if (outputs) outputs->write_manifest();
    return config_error;
  } catch (const NonConvergence& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    if (outputs) outputs->write_manifest();
    return non_convergence;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    if (outputs) outputs->write_manifest();
    return numerical_failure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    if (outputs) outputs->write_manifest();
    return config_error;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid parameters: " << e.what() << '\n';
    if (outputs) outputs->write_manifest();
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    if (outputs) outputs->write_manifest();
    return numerical_failure;
  }
}

}  // namespace gridfield::cli
