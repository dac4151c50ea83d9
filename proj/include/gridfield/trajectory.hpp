#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace gridfield {

/// Timestamped positions of an animal in a circular enclosure centred at the
/// origin. Times in ms, positions in cm.
struct Trajectory {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> y;
  double radius = 80.0;

  std::size_t size() const noexcept { return t.size(); }
  double start() const { return t.front(); }
  double end() const { return t.back(); }

  /// Throws unless times strictly increase, there are >= 2 samples, every
  /// point lies in the enclosure and no gap exceeds max_gap_ms.
  void validate(double max_gap_ms = 100.0) const;

  /// Linearly interpolated position.
  std::array<double, 2> position(double time) const;

  /// Velocity (cm/ms) from central differences at the samples (one-sided at
  /// the ends), linearly interpolated in time. Throws outside [start, end].
  std::array<double, 2> velocity(double time) const;
};

Trajectory read_trajectory_csv(const std::filesystem::path& path, double radius = 80.0);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory);

struct SynthTrajectoryParams {
  double duration_ms = 5.0 * 60.0 * 1000.0;
  double radius_cm = 80.0;
  double sample_ms = 20.0;
  double mean_speed = 0.02;       // cm/ms (20 cm/s)
  double speed_jitter = 0.3;      // relative log-normal spread of the speed
  double heading_diffusion = 0.002;  // rad^2 / ms
};

/// Smooth random walk in the disc: heading follows an Ornstein-Uhlenbeck-like
/// turning process, speed is log-normal around the mean, and the heading is
/// mirrored off the wall. Deterministic for a fixed seed.
Trajectory synth_trajectory(const SynthTrajectoryParams& params, std::uint64_t seed);

}  // namespace gridfield
