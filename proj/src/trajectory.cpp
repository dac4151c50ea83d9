#include "gridfield/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace gridfield {

void Trajectory::validate(double max_gap_ms) const {
  if (t.size() != x.size() || t.size() != y.size()) throw std::invalid_argument("trajectory: column lengths differ");
  if (t.size() < 2) throw std::invalid_argument("trajectory: need at least two samples");
  if (!(radius > 0.0)) throw std::invalid_argument("trajectory: radius must be positive");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw std::invalid_argument("trajectory: non-finite sample at row " + std::to_string(i));
    if (std::hypot(x[i], y[i]) > radius * (1.0 + 1e-12))
      throw std::invalid_argument("trajectory: sample " + std::to_string(i) + " lies outside the enclosure");
    if (i > 0) {
      if (!(t[i] > t[i - 1])) throw std::invalid_argument("trajectory: times must increase strictly (row " +
                                                          std::to_string(i) + ")");
      if (t[i] - t[i - 1] > max_gap_ms)
        throw std::invalid_argument("trajectory: gap of " + std::to_string(t[i] - t[i - 1]) + " ms at row " +
                                    std::to_string(i));
    }
  }
}

namespace {

// Index i with t[i] <= time <= t[i+1].
std::size_t segment(const std::vector<double>& t, double time) {
  if (t.size() < 2 || time < t.front() || time > t.back())
    throw std::out_of_range("trajectory: time " + std::to_string(time) + " ms outside the recorded span");
  auto it = std::upper_bound(t.begin(), t.end(), time);
  const std::size_t hi = std::min<std::size_t>(static_cast<std::size_t>(it - t.begin()), t.size() - 1);
  return hi == 0 ? 0 : hi - 1;
}

std::array<double, 2> sample_velocity(const Trajectory& tr, std::size_t i) {
  const std::size_t lo = i == 0 ? 0 : i - 1;
  const std::size_t hi = i + 1 == tr.size() ? i : i + 1;
  const double dt = tr.t[hi] - tr.t[lo];
  return {(tr.x[hi] - tr.x[lo]) / dt, (tr.y[hi] - tr.y[lo]) / dt};
}

}  // namespace

std::array<double, 2> Trajectory::position(double time) const {
  const std::size_t i = segment(t, time);
  const double w = (time - t[i]) / (t[i + 1] - t[i]);
  return {x[i] + w * (x[i + 1] - x[i]), y[i] + w * (y[i + 1] - y[i])};
}

std::array<double, 2> Trajectory::velocity(double time) const {
  const std::size_t i = segment(t, time);
  const double w = (time - t[i]) / (t[i + 1] - t[i]);
  const auto a = sample_velocity(*this, i);
  const auto b = sample_velocity(*this, i + 1);
  return {a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])};
}

Trajectory read_trajectory_csv(const std::filesystem::path& path, double radius) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open trajectory file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty trajectory file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t_ms,x_cm,y_cm") throw std::runtime_error(path.string() + ": expected header t_ms,x_cm,y_cm");
  Trajectory tr;
  tr.radius = radius;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream fields(line);
    double t, x, y;
    if (!(fields >> t >> x >> y)) throw std::runtime_error(path.string() + ": malformed row " + std::to_string(row));
    tr.t.push_back(t);
    tr.x.push_back(x);
    tr.y.push_back(y);
  }
  return tr;
}

void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "t_ms,x_cm,y_cm\n" << std::setprecision(17);
  for (std::size_t i = 0; i < tr.size(); ++i) out << tr.t[i] << ',' << tr.x[i] << ',' << tr.y[i] << '\n';
}

Trajectory synth_trajectory(const SynthTrajectoryParams& p, std::uint64_t seed) {
  if (!(p.duration_ms > 0.0)) throw std::invalid_argument("synth_trajectory: duration must be positive");
  if (!(p.radius_cm > 0.0) || !(p.sample_ms > 0.0) || !(p.mean_speed > 0.0))
    throw std::invalid_argument("synth_trajectory: radius, sample interval and speed must be positive");

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  const double h = 1.0;  // ms sub-step
  const double turn_relax = 200.0;   // ms, correlation time of the turning rate
  const double speed_relax = 1000.0;  // ms, correlation time of the log speed
  const double wall = 0.98 * p.radius_cm;

  double px = 0.0, py = 0.0;
  double heading = 2.0 * std::numbers::pi * uniform(rng);
  double turn = 0.0;
  double log_speed = 0.0;

  Trajectory tr;
  tr.radius = p.radius_cm;
  const auto samples = static_cast<std::size_t>(std::floor(p.duration_ms / p.sample_ms)) + 1;
  tr.t.reserve(samples);
  tr.x.reserve(samples);
  tr.y.reserve(samples);
  const int sub = std::max(1, static_cast<int>(std::lround(p.sample_ms / h)));
  const double dt = p.sample_ms / sub;

  for (std::size_t k = 0; k < samples; ++k) {
    tr.t.push_back(k * p.sample_ms);
    tr.x.push_back(px);
    tr.y.push_back(py);
    for (int i = 0; i < sub; ++i) {
      turn += -turn / turn_relax * dt + std::sqrt(2.0 * p.heading_diffusion * dt) / turn_relax * 10.0 * normal(rng);
      heading += turn * dt + std::sqrt(p.heading_diffusion * dt) * normal(rng);
      log_speed += -log_speed / speed_relax * dt + p.speed_jitter * std::sqrt(2.0 * dt / speed_relax) * normal(rng);
      const double speed = p.mean_speed * std::exp(log_speed - 0.5 * p.speed_jitter * p.speed_jitter);
      double nx = px + speed * dt * std::cos(heading);
      double ny = py + speed * dt * std::sin(heading);
      const double r = std::hypot(nx, ny);
      if (r > wall) {
        // Mirror the heading about the wall normal and pull the point back inside.
        const double normal_angle = std::atan2(ny, nx);
        heading = 2.0 * normal_angle + std::numbers::pi - heading;
        nx *= (2.0 * wall - r) / r;
        ny *= (2.0 * wall - r) / r;
        turn = 0.0;
      }
      px = nx;
      py = ny;
    }
  }
  return tr;
}

}  // namespace gridfield
