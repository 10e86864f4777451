// Copyright 2026 The msgd-lab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <vector>

#include "json.hpp"
#include "msgd/dynamics.hpp"
#include "msgd/weights.hpp"

namespace msgd {

using Json = nlohmann::ordered_json;

/// Invalid experiment configuration. key() is the dotted path of the
/// offending entry ("model.kappa", "gamma", ...) or empty for syntax errors.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::invalid_argument(key.empty() ? message : key + ": " + message),
        key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

enum class Command { WeightsMoments, Clt, Thm1Gap, WassScaling, Converge, GdOde };

struct CommandInfo {
  Command command;
  std::string_view name;
  std::string_view summary;
};

inline constexpr std::array<CommandInfo, 6> kCommands{{
    {Command::WeightsMoments, "weights-moments",
     "mean, covariance and m*sum(w^2) of each weight scheme against their exact values"},
    {Command::Clt, "clt", "normality (KS) and covariance of the scaled M-SGD gradient error"},
    {Command::Thm1Gap, "thm1-gap",
     "second-moment gap between weighted and plain averages vs 2(1-sqrt(m/n)) Tr sigma^2"},
    {Command::WassScaling, "wass-scaling",
     "sliced W2 between M-SGD and the diffusion at t = T across step sizes"},
    {Command::Converge, "converge", "convergence curves, contraction rate and plateau"},
    {Command::GdOde, "gd-ode", "gradient descent against the gradient flow"},
}};

inline std::string_view to_string(Command c) {
  for (const auto& info : kCommands) {
    if (info.command == c) return info.name;
  }
  return "?";
}

inline std::optional<Command> parse_command(std::string_view name) {
  for (const auto& info : kCommands) {
    if (info.name == name) return info.command;
  }
  return std::nullopt;
}

struct ModelSpec {
  std::string kind;             // quadratic | uniform | logistic
  std::size_t p = 1;
  double s = 1.0;               // quadratic noise scale
  Vector theta_star;            // quadratic minimizer
  std::size_t t = 10000;        // logistic dataset size
  std::vector<double> kappa;    // logistic ridge penalties
  std::string dataset;          // logistic: CSV to load instead of generating
};

struct SchemeSpec {
  WeightKind kind = WeightKind::Minibatch;
  BaseDistribution base = BaseDistribution::StandardNormal;

  WeightScheme with(std::size_t n, std::size_t m) const { return {kind, base, n, m}; }
};

/// A validated experiment. `echo` holds every setting actually used, user
/// values and defaults alike, and is written into each output file.
struct ExperimentConfig {
  Command command = Command::GdOde;
  std::uint64_t seed = 0;
  std::optional<ModelSpec> model;
  std::vector<SchemeSpec> schemes;
  std::size_t n = 0;
  std::size_t m = 0;
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t reps = 0;
  Vector theta;
  std::vector<double> gammas;
  std::size_t K = 0;
  double T = 0.0;
  Vector x0;
  std::vector<ProcessKind> processes;
  std::size_t directions = 0;
  std::size_t substeps = 0;
  std::size_t ode_substeps = 0;
  std::size_t bins = 0;
  std::size_t fit_window = 0;
  std::map<std::string, double> thresholds;
  Json echo;

  double threshold(const std::string& name) const {
    const auto it = thresholds.find(name);
    require(it != thresholds.end(), "unknown threshold " + name);
    return it->second;
  }

  void override_seed(std::uint64_t s) {
    seed = s;
    echo["seed"] = s;
  }
};

namespace detail {

inline std::string type_name(const Json& j) { return j.type_name(); }

template <class T>
T convert(const Json& j, const std::string& key) {
  if constexpr (std::is_same_v<T, std::size_t>) {
    if (j.is_number_unsigned()) return j.get<std::size_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::size_t>();
    if (j.is_number_float()) {
      const double v = j.get<double>();
      if (v >= 0.0 && v == std::floor(v) && v < 1.8e19) return static_cast<std::size_t>(v);
    }
    throw ConfigError(key, "must be a non-negative integer, got " + j.dump());
  } else if constexpr (std::is_same_v<T, double>) {
    if (!j.is_number()) throw ConfigError(key, "must be a number, got " + type_name(j));
    return j.get<double>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!j.is_string()) throw ConfigError(key, "must be a string, got " + type_name(j));
    return j.get<std::string>();
  } else if constexpr (std::is_same_v<T, Vector>) {
    if (!j.is_array()) throw ConfigError(key, "must be an array of numbers");
    Vector out;
    for (std::size_t i = 0; i < j.size(); ++i) {
      out.push_back(convert<double>(j[i], key + "[" + std::to_string(i) + "]"));
    }
    return out;
  } else {
    static_assert(sizeof(T) == 0, "unsupported config type");
  }
}

// Reads keys from one JSON object, mirrors every value used (given or
// defaulted) into `echo`, and rejects keys that were never asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& obj, std::string path, Json& echo)
      : obj_(obj), path_(std::move(path)), echo_(echo) {
    if (!obj_.is_object()) {
      throw ConfigError(path_.empty() ? "config" : path_, "must be a JSON object");
    }
    if (!echo_.is_object()) echo_ = Json::object();
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  const Json* raw(const std::string& key) {
    seen_.insert(key);
    return obj_.contains(key) ? &obj_.at(key) : nullptr;
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    const Json* j = raw(key);
    T v = j ? convert<T>(*j, qualified(key)) : fallback;
    echo_[key] = v;
    return v;
  }

  template <class T>
  T required(const std::string& key) {
    if (!has(key)) throw ConfigError(qualified(key), "required key is missing");
    return get<T>(key, T{});
  }

  Json& echo() { return echo_; }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw ConfigError(qualified(item.key()), "unknown key");
    }
  }

 private:
  const Json& obj_;
  std::string path_;
  Json& echo_;
  std::set<std::string> seen_;
};

inline std::string line_column(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

// A number or an array of numbers, echoed as an array.
inline Vector number_list(ObjectReader& r, const std::string& key, const Vector& fallback) {
  const Json* j = r.raw(key);
  Vector out = fallback;
  if (j) out = j->is_array() ? convert<Vector>(*j, r.qualified(key))
                             : Vector{convert<double>(*j, r.qualified(key))};
  if (out.empty()) throw ConfigError(r.qualified(key), "must not be empty");
  r.echo()[key] = out;
  return out;
}

inline SchemeSpec parse_scheme(const Json& j, const std::string& path, Json& echo) {
  ObjectReader r(j, path, echo);
  const auto kind = r.required<std::string>("kind");
  SchemeSpec spec;
  if (kind == "minibatch") {
    spec.kind = WeightKind::Minibatch;
  } else if (kind == "dirichlet") {
    spec.kind = WeightKind::Dirichlet;
  } else if (kind == "gaussian") {
    spec.kind = WeightKind::GaussianStructured;
    const auto base = r.get<std::string>("base", "normal");
    if (base == "normal") spec.base = BaseDistribution::StandardNormal;
    else if (base == "rademacher") spec.base = BaseDistribution::Rademacher;
    else if (base == "uniform") spec.base = BaseDistribution::UniformScaled;
    else throw ConfigError(r.qualified("base"), "expected normal, rademacher or uniform, got '" + base + "'");
  } else {
    throw ConfigError(r.qualified("kind"), "expected minibatch, gaussian or dirichlet, got '" + kind + "'");
  }
  r.finish();
  return spec;
}

inline std::vector<SchemeSpec> parse_schemes(ObjectReader& top, const std::vector<std::string>& defaults,
                                             bool single) {
  if (top.has("scheme") && top.has("schemes")) {
    throw ConfigError("schemes", "give either 'scheme' or 'schemes', not both");
  }
  Json list = Json::array();
  if (const Json* one = top.raw("scheme")) {
    list.push_back(*one);
  } else if (const Json* many = top.raw("schemes")) {
    if (!many->is_array() || many->empty()) throw ConfigError("schemes", "must be a non-empty array");
    list = *many;
  } else {
    for (const auto& k : defaults) list.push_back(Json{{"kind", k}});
  }
  if (single && list.size() != 1) throw ConfigError("schemes", "this command takes exactly one scheme");
  std::vector<SchemeSpec> out;
  Json echoed = Json::array();
  for (std::size_t i = 0; i < list.size(); ++i) {
    Json e;
    out.push_back(parse_scheme(list[i], "schemes[" + std::to_string(i) + "]", e));
    echoed.push_back(std::move(e));
  }
  top.echo()["schemes"] = std::move(echoed);
  return out;
}

inline ModelSpec parse_model(ObjectReader& top, const std::string& default_kind, std::size_t default_p,
                             const std::vector<std::string>& allowed) {
  Json defaults = Json{{"kind", default_kind}};
  const Json* j = top.raw("model");
  const Json& obj = j ? *j : defaults;
  Json echo;
  ObjectReader r(obj, "model", echo);
  ModelSpec spec;
  spec.kind = r.get<std::string>("kind", default_kind);
  bool ok = false;
  for (const auto& a : allowed) ok = ok || a == spec.kind;
  if (!ok) {
    std::string list;
    for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
    throw ConfigError("model.kind", "this command supports " + list + "; got '" + spec.kind + "'");
  }
  if (spec.kind == "quadratic") {
    spec.p = r.get<std::size_t>("p", default_p);
    if (spec.p < 1) throw ConfigError("model.p", "must be >= 1");
    spec.s = r.get<double>("s", 1.0);
    if (!(spec.s >= 0.0) || !std::isfinite(spec.s)) throw ConfigError("model.s", "must be finite and >= 0");
    spec.theta_star = r.get<Vector>("theta_star", Vector(spec.p, 0.0));
    if (spec.theta_star.size() != spec.p) throw ConfigError("model.theta_star", "must have length p");
  } else if (spec.kind == "uniform") {
    spec.p = r.get<std::size_t>("p", default_p);
    if (spec.p < 1) throw ConfigError("model.p", "must be >= 1");
  } else if (spec.kind == "logistic") {
    spec.dataset = r.get<std::string>("dataset", "");
    spec.p = r.get<std::size_t>("p", 6);
    spec.t = r.get<std::size_t>("t", 10000);
    if (spec.p < 1 || spec.t < 1) throw ConfigError("model", "logistic model needs p, t >= 1");
    spec.kappa = number_list(r, "kappa", {0.1});
    for (double k : spec.kappa) {
      if (!(k > 0.0) || !std::isfinite(k)) throw ConfigError("model.kappa", "ridge penalty must be > 0");
    }
  } else {
    throw ConfigError("model.kind", "unknown model '" + spec.kind + "'");
  }
  r.finish();
  top.echo()["model"] = std::move(echo);
  return spec;
}

inline void check_gammas(const Vector& gammas) {
  for (double g : gammas) {
    if (!(g > 0.0 && g < 1.0)) {
      throw ConfigError("gamma", "step size must satisfy 0 < gamma < 1, got " + io::format_double(g));
    }
  }
}

inline void check_scheme_sizes(const std::vector<SchemeSpec>& schemes, std::size_t n, std::size_t m) {
  if (m < 1 || m > n) {
    throw ConfigError("m", "need 1 <= m <= n, got n = " + std::to_string(n) + ", m = " + std::to_string(m));
  }
  for (const auto& s : schemes) {
    if (s.kind == WeightKind::Dirichlet && (m < 2 || m >= n)) {
      throw ConfigError("m", "dirichlet weights need 2 <= m < n so that the concentration "
                             "(m - 1)/(n - m) is positive and finite; got n = " +
                                 std::to_string(n) + ", m = " + std::to_string(m));
    }
    if (s.kind == WeightKind::GaussianStructured && n < 2) {
      throw ConfigError("n", "gaussian-structured weights need n >= 2");
    }
  }
}

inline void check_length(const Vector& v, std::size_t p, const std::string& key) {
  if (v.size() != p) {
    throw ConfigError(key, "must have length " + std::to_string(p) + " (the model dimension)");
  }
  if (!all_finite(v)) throw ConfigError(key, "entries must be finite");
}

inline void check_horizon(const Vector& gammas, double T) {
  if (!(T > 0.0)) throw ConfigError("T", "horizon must be positive");
  for (double g : gammas) {
    const double steps = T / g;
    if (std::abs(steps - std::round(steps)) > 1e-9 * steps || std::round(steps) < 1.0) {
      throw ConfigError("T", "must be an integer multiple of every gamma (gamma = " +
                                 io::format_double(g) + ")");
    }
  }
}

inline void read_thresholds(ObjectReader& top, std::map<std::string, double> defaults,
                            std::map<std::string, double>& out) {
  Json echo;
  const Json empty = Json::object();
  const Json* j = top.raw("thresholds");
  ObjectReader r(j ? *j : empty, "thresholds", echo);
  for (auto& [name, value] : defaults) value = r.get<double>(name, value);
  r.finish();
  out = std::move(defaults);
  top.echo()["thresholds"] = std::move(echo);
}

inline std::size_t at_least(ObjectReader& r, const std::string& key, std::size_t fallback,
                            std::size_t minimum) {
  const auto v = r.get<std::size_t>(key, fallback);
  if (v < minimum) throw ConfigError(key, "must be >= " + std::to_string(minimum));
  return v;
}

}  // namespace detail

/// Parses and validates a JSON experiment description.
inline ExperimentConfig parse_config(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text.begin(), text.end());
  } catch (const Json::parse_error& e) {
    std::string what = e.what();
    const auto pos = what.find("syntax error");
    throw ConfigError("", "JSON syntax error at " + detail::line_column(text, e.byte) + ": " +
                              (pos == std::string::npos ? what : what.substr(pos)));
  }

  ExperimentConfig c;
  detail::ObjectReader top(doc, "", c.echo);
  const auto name = top.required<std::string>("command");
  const auto cmd = parse_command(name);
  if (!cmd) {
    std::string list;
    for (const auto& info : kCommands) list += (list.empty() ? "" : ", ") + std::string(info.name);
    throw ConfigError("command", "unknown command '" + name + "'; expected one of " + list);
  }
  c.command = *cmd;
  c.seed = top.get<std::uint64_t>("seed", 1);

  using detail::at_least;
  switch (c.command) {
    case Command::WeightsMoments: {
      c.schemes = detail::parse_schemes(top, {"minibatch", "gaussian", "dirichlet"}, false);
      c.n = top.get<std::size_t>("n", 2000);
      c.m = top.get<std::size_t>("m", 400);
      detail::check_scheme_sizes(c.schemes, c.n, c.m);
      c.reps = at_least(top, "reps", 20000, 100);
      detail::read_thresholds(top, {{"mean_se", 4.0}, {"variance_se", 4.0}, {"covariance_se", 4.0},
                                    {"m_sum_sq_se", 3.0}}, c.thresholds);
      break;
    }
    case Command::Clt: {
      c.model = detail::parse_model(top, "uniform", 1, {"uniform", "quadratic", "logistic"});
      if (c.model->kappa.size() > 1) throw ConfigError("model.kappa", "this command takes one kappa");
      c.schemes = detail::parse_schemes(top, {"dirichlet"}, false);
      c.n = top.get<std::size_t>("n", 10000);
      c.m = top.get<std::size_t>("m", 2000);
      detail::check_scheme_sizes(c.schemes, c.n, c.m);
      c.reps = at_least(top, "reps", 10000, 100);
      c.theta = top.get<Vector>("theta", Vector(c.model->p, 0.0));
      detail::check_length(c.theta, c.model->p, "theta");
      c.bins = at_least(top, "bins", 50, 1);
      detail::read_thresholds(top, {{"ks_max", 0.03}, {"covariance_se", 4.0}}, c.thresholds);
      break;
    }
    case Command::Thm1Gap: {
      c.model = detail::parse_model(top, "quadratic", 2, {"quadratic", "uniform", "logistic"});
      if (c.model->kappa.size() > 1) throw ConfigError("model.kappa", "this command takes one kappa");
      c.schemes = detail::parse_schemes(top, {"minibatch", "gaussian", "dirichlet"}, false);
      if (top.has("pairs") && (top.has("n") || top.has("m"))) {
        throw ConfigError("pairs", "give either 'pairs' or 'n' and 'm', not both");
      }
      if (top.has("n") || top.has("m")) {
        c.pairs = {{top.required<std::size_t>("n"), top.required<std::size_t>("m")}};
      } else {
        const Json* j = top.raw("pairs");
        Json echo = Json::array();
        if (!j) {
          c.pairs = {{10000, 2500}, {10000, 9000}};
        } else {
          if (!j->is_array() || j->empty()) throw ConfigError("pairs", "must be a non-empty array of [n, m]");
          for (std::size_t i = 0; i < j->size(); ++i) {
            const auto key = "pairs[" + std::to_string(i) + "]";
            const Json& pr = (*j)[i];
            if (!pr.is_array() || pr.size() != 2) throw ConfigError(key, "must be [n, m]");
            c.pairs.emplace_back(detail::convert<std::size_t>(pr[0], key),
                                 detail::convert<std::size_t>(pr[1], key));
          }
        }
        for (const auto& [n, m] : c.pairs) echo.push_back(Json::array({n, m}));
        top.echo()["pairs"] = std::move(echo);
      }
      for (const auto& [n, m] : c.pairs) detail::check_scheme_sizes(c.schemes, n, m);
      c.reps = at_least(top, "reps", 2000, 1000);
      c.theta = top.get<Vector>("theta", Vector(c.model->p, 0.0));
      detail::check_length(c.theta, c.model->p, "theta");
      detail::read_thresholds(top, {{"gap_se", 3.0}}, c.thresholds);
      break;
    }
    case Command::WassScaling: {
      c.model = detail::parse_model(top, "quadratic", 2, {"quadratic", "uniform", "logistic"});
      if (c.model->kappa.size() > 1) throw ConfigError("model.kappa", "this command takes one kappa");
      c.schemes = detail::parse_schemes(top, {"gaussian"}, true);
      c.n = top.get<std::size_t>("n", 512);
      c.m = top.get<std::size_t>("m", 64);
      detail::check_scheme_sizes(c.schemes, c.n, c.m);
      c.gammas = detail::number_list(top, "gamma", {0.2, 0.1, 0.05, 0.025});
      detail::check_gammas(c.gammas);
      if (c.gammas.size() < 2) throw ConfigError("gamma", "need at least two step sizes to fit a slope");
      c.T = top.get<double>("T", 1.0);
      detail::check_horizon(c.gammas, c.T);
      c.reps = at_least(top, "reps", 500, 2);
      c.x0 = top.get<Vector>("x0", Vector(c.model->p, 1.0));
      detail::check_length(c.x0, c.model->p, "x0");
      c.directions = at_least(top, "directions", 200, 1);
      c.substeps = at_least(top, "substeps", 50, 1);
      detail::read_thresholds(top, {{"monotone_slack", 0.1}, {"slope_min", 0.8}, {"slope_max", 2.2}},
                              c.thresholds);
      break;
    }
    case Command::Converge: {
      c.model = detail::parse_model(top, "quadratic", 1, {"quadratic", "logistic"});
      const bool logistic = c.model->kind == "logistic";
      c.schemes = detail::parse_schemes(top, {logistic ? "gaussian" : "minibatch"}, true);
      c.n = top.get<std::size_t>("n", logistic ? 1000 : 500);
      c.m = top.get<std::size_t>("m", logistic ? 10 : 50);
      detail::check_scheme_sizes(c.schemes, c.n, c.m);
      c.gammas = detail::number_list(top, "gamma", logistic ? Vector{0.5, 0.1} : Vector{0.1});
      detail::check_gammas(c.gammas);
      c.K = at_least(top, "K", logistic ? 300 : 200, 6);
      c.reps = at_least(top, "reps", logistic ? 200 : 500, logistic ? 20 : 2);
      c.x0 = top.get<Vector>("x0", logistic ? Vector(c.model->p, 1.0) : Vector(c.model->p, 10.0));
      detail::check_length(c.x0, c.model->p, "x0");
      {
        const Json* j = top.raw("processes");
        std::vector<std::string> names;
        if (!j) {
          names = logistic ? std::vector<std::string>{"msgd"}
                           : std::vector<std::string>{"gaussian-sgd", "msgd"};
        } else {
          if (!j->is_array() || j->empty()) throw ConfigError("processes", "must be a non-empty array");
          for (std::size_t i = 0; i < j->size(); ++i) {
            names.push_back(detail::convert<std::string>((*j)[i], "processes[" + std::to_string(i) + "]"));
          }
        }
        for (const auto& nm : names) {
          if (nm == "gd") c.processes.push_back(ProcessKind::GD);
          else if (nm == "gaussian-sgd") c.processes.push_back(ProcessKind::GaussianSGD);
          else if (nm == "msgd") c.processes.push_back(ProcessKind::MSGD);
          else throw ConfigError("processes", "expected gd, gaussian-sgd or msgd, got '" + nm + "'");
        }
        top.echo()["processes"] = names;
      }
      if (logistic) {
        c.fit_window = top.get<std::size_t>("fit_window", 0);
        detail::read_thresholds(top, {{"decrease_ratio", 0.5}, {"plateau_se", 3.0},
                                      {"order_se", 2.0}, {"fit_excess", 10.0}}, c.thresholds);
      } else {
        if (c.gammas.size() != 1) throw ConfigError("gamma", "quadratic convergence takes one step size");
        c.fit_window = at_least(top, "fit_window", 20, 2);
        if (c.fit_window > c.K + 1) throw ConfigError("fit_window", "must not exceed K + 1");
        detail::read_thresholds(top, {{"recursion_se", 4.0}, {"rho_tol", 0.02}}, c.thresholds);
      }
      break;
    }
    case Command::GdOde: {
      c.model = detail::parse_model(top, "quadratic", 1, {"quadratic", "logistic"});
      if (c.model->kappa.size() > 1) throw ConfigError("model.kappa", "this command takes one kappa");
      c.gammas = detail::number_list(top, "gamma", {0.1, 0.05, 0.025, 0.0125});
      detail::check_gammas(c.gammas);
      if (c.gammas.size() < 2) throw ConfigError("gamma", "need at least two step sizes to fit a slope");
      c.T = top.get<double>("T", 1.0);
      detail::check_horizon(c.gammas, c.T);
      c.x0 = top.get<Vector>("x0", Vector(c.model->p, 1.0));
      detail::check_length(c.x0, c.model->p, "x0");
      c.ode_substeps = at_least(top, "ode_substeps", 20, 10);
      detail::read_thresholds(top, {{"slope_min", 0.8}, {"slope_max", 1.2}}, c.thresholds);
      break;
    }
  }
  top.finish();
  return c;
}

}  // namespace msgd
