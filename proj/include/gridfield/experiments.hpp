#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gridfield/activation.hpp"
#include "gridfield/connectivity.hpp"
#include "gridfield/fokker_planck.hpp"
#include "gridfield/homogeneous.hpp"
#include "gridfield/trajectory.hpp"

namespace gridfield {

// ---------------------------------------------------------------------------
// Pattern classification

enum class Pattern { homogeneous, stripe, hexagonal, eye, other };

std::string to_string(Pattern p);
Pattern parse_pattern(const std::string& name);

struct PatternThresholds {
  double homogeneous_rel = 1e-3;  // (max - min) / max below this is homogeneous
  double stripe_power = 0.8;      // share of non-zero-mode power on one +-k pair
  double peak_ratio = 2.0;        // pairs within this factor of the top count as dominant
};

/// Average of the four population means, <f>(x) = 1/4 sum_beta <f^beta>(x).
std::vector<double> population_average(const FieldState& state);

/// Label of a mean field on the n x n grid (x-major).
Pattern classify_pattern(const TorusGrid& grid, std::span<const double> mean_field,
                         const PatternThresholds& thresholds = {});

// ---------------------------------------------------------------------------
// Continuation in sigma

enum class SweepDirection { l2r, r2l };
enum class SweepInit { random_deltas, perturbed_homogeneous, stripe_seeded };

std::string to_string(SweepDirection d);
std::string to_string(SweepInit i);
SweepDirection parse_direction(const std::string& name);
SweepInit parse_init(const std::string& name);

struct SweepConfig {
  SweepDirection direction = SweepDirection::l2r;
  double sigma_lo = 0.005;
  double sigma_hi = 0.05;
  int points = 20;
  SweepInit init = SweepInit::random_deltas;
  std::uint64_t seed = 1;
  double delta_fraction = 0.01;      // random_deltas: share of cells started at s = 1
  double perturbation = 1e-3;        // perturbed_homogeneous: spread of the column rates
  double stripe_width = 0.125;       // stripe_seeded: width in y of the band at s = 1
  PatternThresholds thresholds{};

  void validate() const;
  /// The sigma values in sweep order.
  std::vector<double> sigmas() const;
};

struct BranchRecord {
  double sigma = 0.0;
  double max_mean = 0.0;
  double min_mean = 0.0;
  Pattern pattern = Pattern::other;
  std::string stop_reason;
  double final_time = 0.0;
};

/// Initial state of a sweep at its first sigma.
FieldState sweep_initial_state(const TorusGrid& grid, const SGrid& sgrid, const SweepConfig& config,
                               const Activation& activation, double w0, double b, double sigma);

/// Called with each converged state (for dumps) before the next sigma starts.
using BranchObserver = std::function<void(std::size_t index, const BranchRecord&, const FieldState&)>;

/// Runs run_to_stationary at every sigma, each point starting from the
/// previous steady state. The solver's sigma is overwritten per point.
std::vector<BranchRecord> bifurcation_sweep(FokkerPlanckSolver& solver, const SGrid& sgrid,
                                            const SweepConfig& config, const BranchObserver& observer = {});

/// Same, continuing from a given state instead of the configured init.
std::vector<BranchRecord> bifurcation_sweep_from(FokkerPlanckSolver& solver, FieldState state,
                                                 const SweepConfig& config, const BranchObserver& observer = {});

struct Transition {
  bool found = false;
  double sigma_star = 0.0;
  double jump = 0.0;
  double spacing = 0.0;  // |sigma| gap of the pair that jumped
};

/// Largest change of max_mean - min_mean between consecutive records, kept if
/// it exceeds factor times the median change.
Transition detect_transition(std::span<const BranchRecord> branch, double factor = 5.0);

// ---------------------------------------------------------------------------
// Trajectory replay

struct FiringEvent {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double rate = 0.0;
};

struct ProbeCell {
  int ix = -1;  // -1 selects n/2 (the cell at the origin)
  int iy = -1;
  int beta = 0;
};

struct ReplayResult {
  std::vector<FiringEvent> events;
  std::size_t samples = 0;
  double firing_fraction() const { return samples ? static_cast<double>(events.size()) / samples : 0.0; }
};

/// Steps the solver through the trajectory with the velocity-coupled input and
/// tests the probe cell at every trajectory sample: Phi(arg) > threshold emits
/// an event. The state is expected to be stabilised beforehand; its clock is
/// reset to the trajectory start. duration_ms < 0 replays the whole path.
ReplayResult replay(FokkerPlanckSolver& solver, FieldState& state, const Trajectory& trajectory,
                    ProbeCell probe = {}, double threshold = 0.0, double duration_ms = -1.0);

/// Groups events whose positions lie within link_cm of each other (single
/// linkage) and returns the cluster sizes, largest first.
std::vector<std::size_t> event_clusters(std::span<const FiringEvent> events, double link_cm);

// ---------------------------------------------------------------------------
// Grid refinement

struct RefinementConfig {
  std::vector<int> n_list{32, 64, 128};
  int n_ref = 256;
  double t_eval = 50.0;  // ms
  double s_max = 1.3;
  double delta_fraction = 0.01;
  std::uint64_t seed = 1;
};

struct RefinementRow {
  int n = 0;
  double l1 = 0.0;
  double l2 = 0.0;
  double ooc_l1 = std::numeric_limits<double>::quiet_NaN();
  double ooc_l2 = std::numeric_limits<double>::quiet_NaN();
};

/// Fine initial data on n_ref^2 x n_ref: in each population 1% of the cells
/// start at s = 1, the rest at s = 0, unit mass per column.
FieldState refinement_initial_state(const RefinementConfig& config);

/// Block averages over factor^2 cells in x and factor cells in s.
FieldState block_average(const FieldState& fine, int factor);

/// Block averages of a field on the fine grid down to the coarse grid.
std::vector<double> block_average_field(const TorusGrid& fine, std::span<const double> field, int factor);

/// Runs every level to t_eval from block averages of the finest data and
/// compares the population-averaged mean fields, averaged onto each coarse
/// grid, in L1 and L2 over x. The reference is the n_ref run.
std::vector<RefinementRow> refinement_study(const KernelParams& kernel_params, ShiftSet shifts,
                                            const Activation& activation, const SolverParams& params,
                                            const RefinementConfig& config, int threads = 1);

// ---------------------------------------------------------------------------
// Homogeneous relaxation

struct RelaxationConfig {
  int n_s = 512;
  double s_max = 3.0;
  double w0 = -20.6711;
  double epsilon = 0.01;  // smooth_eps
  int points = 51;
  double t_end = 300.0;      // ms
  double sample_ms = 1.0;
  double fit_floor = 1e-12;  // fits stop once an error first drops below this
};

struct RelaxationRun {
  std::uint64_t seed = 0;
  std::vector<double> t, l1, mean_diff;
  double slope_l1 = 0.0;    // -d ln(L1) / dt, 1/ms
  double slope_mean = 0.0;  // -d ln|<f> - <f_inf>| / dt, 1/ms
  double t_l1_below_1e8 = std::numeric_limits<double>::infinity();
  double final_l1 = 0.0;
};

struct RelaxationSummary {
  std::vector<RelaxationRun> runs;
  DiscreteStationary target;
  double mean_slope_l1 = 0.0;
  double mean_slope_mean = 0.0;
};

/// Initial density: `points` distinct random cells share unit mass equally;
/// 512 cells on [0, 3] with 51 points gives the value 512/153.
std::vector<double> relaxation_initial_density(const SGrid& sgrid, int points, std::uint64_t seed);

/// Least-squares slope of ln(err) against t over the samples before err first
/// drops below floor; returns the decay rate (positive when decaying).
double decay_rate(std::span<const double> t, std::span<const double> err, double floor);

RelaxationSummary relaxation_study(int runs, std::uint64_t seed, const SolverParams& params,
                                   const RelaxationConfig& config = {});

// ---------------------------------------------------------------------------
// CSV outputs

void write_branch_csv(const std::filesystem::path& path, std::span<const BranchRecord> branch);
std::vector<BranchRecord> read_branch_csv(const std::filesystem::path& path);
void write_events_csv(const std::filesystem::path& path, std::span<const FiringEvent> events);
void write_refinement_csv(const std::filesystem::path& path, std::span<const RefinementRow> rows);
/// t_ms,seed,l1,mean_diff for every run.
void write_relaxation_csv(const std::filesystem::path& path, const RelaxationSummary& summary);

}  // namespace gridfield
