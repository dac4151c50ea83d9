#include "gridfield/activation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gridfield {

Activation::Activation(ActivationKind kind, double epsilon, double gain, double value)
    : kind_(kind), epsilon_(epsilon), gain_(gain), value_(value) {
  if ((kind == ActivationKind::smooth_eps || kind == ActivationKind::smooth_sqrt) &&
      !(epsilon > 0.0 && std::isfinite(epsilon)))
    throw std::invalid_argument("activation: epsilon must be positive");
  if (kind == ActivationKind::sigmoid && !(gain > 0.0 && std::isfinite(gain)))
    throw std::invalid_argument("activation: gain must be positive");
  if (kind == ActivationKind::constant && !std::isfinite(value))
    throw std::invalid_argument("activation: constant value must be finite");

  if (kind == ActivationKind::smooth_eps) {
    const double half_width = 10.0 * std::sqrt(epsilon);
    const int samples = 4001;
    double lowest = derivative(-half_width);
    for (int i = 1; i < samples; ++i) {
      const double x = -half_width + 2.0 * half_width * i / (samples - 1);
      lowest = std::min(lowest, derivative(x));
    }
    min_slope_ = lowest;
  }
}

Activation Activation::relu() { return {ActivationKind::relu, 0.0, 0.0, 0.0}; }
Activation Activation::smooth_eps(double epsilon) {
  return {ActivationKind::smooth_eps, epsilon, 0.0, 0.0};
}
Activation Activation::smooth_sqrt(double epsilon) {
  return {ActivationKind::smooth_sqrt, epsilon, 0.0, 0.0};
}
Activation Activation::sigmoid(double gain) { return {ActivationKind::sigmoid, 0.0, gain, 0.0}; }
Activation Activation::constant(double value) {
  return {ActivationKind::constant, 0.0, 0.0, value};
}

double Activation::operator()(double x) const noexcept {
  switch (kind_) {
    case ActivationKind::relu:
      return x > 0.0 ? x : 0.0;
    case ActivationKind::smooth_eps:
      return 0.5 * x * (1.0 + x / std::sqrt(x * x + epsilon_));
    case ActivationKind::smooth_sqrt:
      return 0.5 * (x + std::sqrt(x * x + epsilon_));
    case ActivationKind::sigmoid:
      // Both branches avoid overflow of exp for large |x|.
      if (x >= 0.0) return 1.0 / (1.0 + std::exp(-gain_ * x));
      else {
        const double e = std::exp(gain_ * x);
        return e / (1.0 + e);
      }
    case ActivationKind::constant:
      return value_;
  }
  return 0.0;
}

double Activation::derivative(double x) const noexcept {
  switch (kind_) {
    case ActivationKind::relu:
      if (x > 0.0) return 1.0;
      if (x < 0.0) return 0.0;
      return 0.5;
    case ActivationKind::smooth_eps: {
      const double r2 = x * x + epsilon_;
      return 0.5 + 0.5 * (x * x * x + 2.0 * x * epsilon_) / (r2 * std::sqrt(r2));
    }
    case ActivationKind::smooth_sqrt:
      return 0.5 * (1.0 + x / std::sqrt(x * x + epsilon_));
    case ActivationKind::sigmoid: {
      const double y = (*this)(x);
      return gain_ * y * (1.0 - y);
    }
    case ActivationKind::constant:
      return 0.0;
  }
  return 0.0;
}

std::string Activation::name() const {
  switch (kind_) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::smooth_eps: return "smooth_eps(" + std::to_string(epsilon_) + ")";
    case ActivationKind::smooth_sqrt: return "smooth_sqrt(" + std::to_string(epsilon_) + ")";
    case ActivationKind::sigmoid: return "sigmoid(" + std::to_string(gain_) + ")";
    case ActivationKind::constant: return "constant(" + std::to_string(value_) + ")";
  }
  return "unknown";
}

ActivationKind parse_activation_kind(std::string_view name) {
  if (name == "relu") return ActivationKind::relu;
  if (name == "smooth_eps") return ActivationKind::smooth_eps;
  if (name == "smooth_sqrt") return ActivationKind::smooth_sqrt;
  if (name == "sigmoid") return ActivationKind::sigmoid;
  if (name == "constant") return ActivationKind::constant;
  throw std::invalid_argument("unknown activation kind '" + std::string(name) + "'");
}

std::string to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::relu: return "relu";
    case ActivationKind::smooth_eps: return "smooth_eps";
    case ActivationKind::smooth_sqrt: return "smooth_sqrt";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::constant: return "constant";
  }
  return "unknown";
}

}  // namespace gridfield
