#include "config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace gridfield::cli {

using nlohmann::json;

Activation ActivationConfig::build() const {
  const auto k = parse_activation_kind(kind);
  switch (k) {
    case ActivationKind::relu: return Activation::relu();
    case ActivationKind::smooth_eps: return Activation::smooth_eps(epsilon);
    case ActivationKind::smooth_sqrt: return Activation::smooth_sqrt(epsilon);
    case ActivationKind::sigmoid: return Activation::sigmoid(gain);
    case ActivationKind::constant:
      if (!value) throw ConfigError("activation.value", "required when activation.kind is constant");
      return Activation::constant(*value);
  }
  throw ConfigError("activation.kind", "unsupported");
}

RunConfig::RunConfig() {
  solver.alpha = 0.3;
  sweep.sigma_lo = 0.01;
  sweep.sigma_hi = 0.05;
}

json to_json(const RunConfig& c) {
  json j;
  j["grid"] = {{"n", c.grid.n}, {"n_s", c.grid.n_s}, {"s_max", c.grid.s_max}};
  j["kernel"] = {{"A", c.kernel.amplitude}, {"a", c.kernel.offset}, {"b", c.kernel.steepness}};
  j["shift"] = {{"z_cells", c.shift.z_cells}};
  j["activation"] = {{"kind", c.activation.kind}, {"epsilon", c.activation.epsilon}, {"gain", c.activation.gain}};
  if (c.activation.value) j["activation"]["value"] = *c.activation.value;
  const auto& s = c.solver;
  j["solver"] = {{"tau", s.tau},     {"sigma", s.sigma}, {"B", s.B},         {"alpha", s.alpha},
                 {"cfl", s.cfl},     {"t_min", s.t_min}, {"t_max", s.t_max}, {"stop_tol", s.stop_tol}};
  const auto& w = c.sweep;
  j["sweep"] = {{"direction", to_string(w.direction)},
                {"sigma_lo", w.sigma_lo},
                {"sigma_hi", w.sigma_hi},
                {"points", w.points},
                {"init", to_string(w.init)},
                {"delta_fraction", w.delta_fraction},
                {"perturbation", w.perturbation},
                {"stripe_width", w.stripe_width},
                {"homogeneous_rel", w.thresholds.homogeneous_rel},
                {"stripe_power", w.thresholds.stripe_power},
                {"peak_ratio", w.thresholds.peak_ratio}};
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  return j;
}

namespace {

// Reads typed values out of a JSON object, tracking which keys were used.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
  }

  std::string key(const std::string& name) const { return path_.empty() ? name : path_ + "." + name; }

  template <class T>
  void get(const std::string& name, T& out) {
    used_.insert(name);
    if (!node_.contains(name)) return;
    const auto& v = node_.at(name);
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(key(name), "expected a number");
        out = v.get<double>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(key(name), "expected a string");
        out = v.get<std::string>();
      } else if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw ConfigError(key(name), "expected a nonnegative integer");
        out = v.get<std::uint64_t>();
      } else {
        if (!v.is_number_integer()) throw ConfigError(key(name), "expected an integer");
        const auto x = v.get<long long>();
        if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max())
          throw ConfigError(key(name), "integer out of range");
        out = static_cast<int>(x);
      }
    } catch (const json::exception& e) {
      throw ConfigError(key(name), e.what());
    }
  }

  void get_optional(const std::string& name, std::optional<double>& out) {
    used_.insert(name);
    if (!node_.contains(name)) return;
    double v = 0.0;
    get(name, v);
    out = v;
  }

  Reader child(const std::string& name) {
    used_.insert(name);
    static const json empty = json::object();
    return Reader(node_.contains(name) ? node_.at(name) : empty, key(name));
  }

  void finish() const {
    for (const auto& [k, v] : node_.items())
      if (!used_.count(k)) throw ConfigError(key(k), "unknown key");
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> used_;
};

void apply_override(json& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare words are strings
  }
  json* node = &root;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(path, "empty key segment");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    json& next = (*node)[part];
    if (next.is_null()) next = json::object();
    if (!next.is_object()) throw ConfigError(path.substr(0, dot), "is not an object");
    node = &next;
    start = dot + 1;
  }
}

void check(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, what);
}

}  // namespace

RunConfig parse_config_json(json j, const std::vector<std::string>& overrides) {
  if (j.is_null()) j = json::object();
  for (const auto& o : overrides) apply_override(j, o);

  RunConfig c;
  Reader root(j, "");
  {
    auto r = root.child("grid");
    r.get("n", c.grid.n);
    r.get("n_s", c.grid.n_s);
    r.get("s_max", c.grid.s_max);
    r.finish();
  }
  {
    auto r = root.child("kernel");
    r.get("A", c.kernel.amplitude);
    r.get("a", c.kernel.offset);
    r.get("b", c.kernel.steepness);
    r.finish();
  }
  {
    auto r = root.child("shift");
    r.get("z_cells", c.shift.z_cells);
    r.finish();
  }
  {
    auto r = root.child("activation");
    r.get("kind", c.activation.kind);
    r.get("epsilon", c.activation.epsilon);
    r.get("gain", c.activation.gain);
    r.get_optional("value", c.activation.value);
    r.finish();
  }
  {
    auto r = root.child("solver");
    auto& s = c.solver;
    r.get("tau", s.tau);
    r.get("sigma", s.sigma);
    r.get("B", s.B);
    r.get("alpha", s.alpha);
    r.get("cfl", s.cfl);
    r.get("t_min", s.t_min);
    r.get("t_max", s.t_max);
    r.get("stop_tol", s.stop_tol);
    r.finish();
  }
  std::string direction = to_string(c.sweep.direction), init = to_string(c.sweep.init);
  {
    auto r = root.child("sweep");
    auto& w = c.sweep;
    r.get("direction", direction);
    r.get("sigma_lo", w.sigma_lo);
    r.get("sigma_hi", w.sigma_hi);
    r.get("points", w.points);
    r.get("init", init);
    r.get("delta_fraction", w.delta_fraction);
    r.get("perturbation", w.perturbation);
    r.get("stripe_width", w.stripe_width);
    r.get("homogeneous_rel", w.thresholds.homogeneous_rel);
    r.get("stripe_power", w.thresholds.stripe_power);
    r.get("peak_ratio", w.thresholds.peak_ratio);
    r.finish();
  }
  root.get("seed", c.seed);
  root.get("output_dir", c.output_dir);
  root.finish();

  // Ranges.
  check(c.grid.n >= 4 && c.grid.n % 2 == 0, "grid.n", "must be an even integer >= 4");
  check(c.grid.n_s >= 2, "grid.n_s", "must be >= 2");
  check(c.grid.s_max > 0.0 && std::isfinite(c.grid.s_max), "grid.s_max", "must be positive");
  check(c.kernel.amplitude >= 0.0 && std::isfinite(c.kernel.amplitude), "kernel.A", "must be >= 0");
  check(std::isfinite(c.kernel.offset), "kernel.a", "must be finite");
  check(c.kernel.steepness > 0.0 && std::isfinite(c.kernel.steepness), "kernel.b", "must be positive");
  check(c.shift.z_cells >= 0 && c.shift.z_cells < c.grid.n / 2, "shift.z_cells", "must lie in [0, n/2)");
  try {
    (void)parse_activation_kind(c.activation.kind);
  } catch (const std::exception& e) {
    throw ConfigError("activation.kind", e.what());
  }
  check(c.activation.epsilon > 0.0, "activation.epsilon", "must be positive");
  check(c.activation.gain > 0.0, "activation.gain", "must be positive");
  try {
    (void)c.activation.build();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("activation", e.what());
  }
  try {
    c.solver.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.substr(0, msg.find(' ')), msg.substr(msg.find(' ') + 1));
  }
  try {
    c.sweep.direction = parse_direction(direction);
  } catch (const std::exception& e) {
    throw ConfigError("sweep.direction", e.what());
  }
  try {
    c.sweep.init = parse_init(init);
  } catch (const std::exception& e) {
    throw ConfigError("sweep.init", e.what());
  }
  try {
    c.sweep.validate();
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    throw ConfigError(msg.substr(0, msg.find(' ')), msg.substr(msg.find(' ') + 1));
  }
  check(c.sweep.thresholds.homogeneous_rel > 0.0, "sweep.homogeneous_rel", "must be positive");
  check(c.sweep.thresholds.stripe_power > 0.0 && c.sweep.thresholds.stripe_power <= 1.0, "sweep.stripe_power",
        "must lie in (0, 1]");
  check(c.sweep.thresholds.peak_ratio >= 1.0, "sweep.peak_ratio", "must be >= 1");
  check(!c.output_dir.empty(), "output_dir", "must not be empty");
  c.sweep.seed = c.seed;
  return c;
}

RunConfig parse_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("<file>", "cannot open " + file->string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (text.find_first_not_of(" \t\r\n") != std::string::npos) {
      try {
        j = json::parse(text);
      } catch (const json::parse_error& e) {
        throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
      }
    }
  }
  return parse_config_json(std::move(j), overrides);
}

}  // namespace gridfield::cli
