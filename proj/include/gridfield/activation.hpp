#pragma once

#include <string>
#include <string_view>

namespace gridfield {

enum class ActivationKind { relu, smooth_eps, smooth_sqrt, sigmoid, constant };

/// Firing-rate modulation function Phi and its derivative.
///
/// smooth_eps is 0.5 x (1 + x / sqrt(x^2 + eps)), smooth_sqrt is
/// 0.5 (x + sqrt(x^2 + eps)), sigmoid is 1 / (1 + exp(-gain x)). The constant
/// kind ignores its argument; it exists for the degenerate closed-form cases
/// (pure transport, half-normal stationary law).
class Activation {
 public:
  static Activation relu();
  static Activation smooth_eps(double epsilon);
  static Activation smooth_sqrt(double epsilon);
  static Activation sigmoid(double gain);
  static Activation constant(double value);

  ActivationKind kind() const noexcept { return kind_; }
  double epsilon() const noexcept { return epsilon_; }
  double gain() const noexcept { return gain_; }
  double value() const noexcept { return value_; }

  double operator()(double x) const noexcept;
  double derivative(double x) const noexcept;

  // Smallest derivative found by sampling [-10 sqrt(eps), 10 sqrt(eps)] at
  // construction. smooth_eps dips slightly below zero for every eps.
  double min_slope() const noexcept { return min_slope_; }

  std::string name() const;

 private:
  Activation(ActivationKind kind, double epsilon, double gain, double value);

  ActivationKind kind_;
  double epsilon_ = 0.0;
  double gain_ = 0.0;
  double value_ = 0.0;
  double min_slope_ = 0.0;
};

inline double evaluate(const Activation& a, double x) noexcept { return a(x); }
inline double derivative(const Activation& a, double x) noexcept { return a.derivative(x); }

ActivationKind parse_activation_kind(std::string_view name);
std::string to_string(ActivationKind kind);

}  // namespace gridfield
