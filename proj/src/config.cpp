#include "evograd/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>

namespace evograd {

namespace {

std::string join_lines(const std::vector<std::string>& v) {
  std::string s = "invalid configuration:";
  for (const auto& p : v) s += "\n  " + p;
  return s;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::string canonical(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

std::vector<std::string> split_list(const std::vector<std::string>& values) {
  std::vector<std::string> out;
  for (const auto& v : values) {
    std::size_t start = 0;
    while (true) {
      const auto comma = v.find(',', start);
      const auto item = trim(v.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (!item.empty()) out.push_back(item);
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
  }
  return out;
}

bool to_double(const std::string& s, double& out) {
  char* end = nullptr;
  errno = 0;
  out = std::strtod(s.c_str(), &end);
  return !s.empty() && errno == 0 && *end == '\0';
}

bool to_long(const std::string& s, long long& out) {
  char* end = nullptr;
  errno = 0;
  out = std::strtoll(s.c_str(), &end, 10);
  return !s.empty() && errno == 0 && *end == '\0';
}

bool to_bool(const std::string& s, bool& out) {
  if (s == "1" || s == "true" || s == "yes" || s == "on") return out = true, true;
  if (s == "0" || s == "false" || s == "no" || s == "off") return out = false, true;
  return false;
}

Experiment parse_experiment(const std::string& s) {
  if (s == "one_d_grid") return Experiment::one_d_grid;
  if (s == "one_d_traj") return Experiment::one_d_traj;
  if (s == "rotation") return Experiment::rotation;
  if (s == "reweight") return Experiment::reweight;
  if (s == "scaling") return Experiment::scaling;
  throw std::invalid_argument("unknown experiment '" + s +
                              "' (expected one_d_grid, one_d_traj, rotation, reweight or scaling)");
}

SweepDimension parse_dimension(const std::string& s) {
  if (s == "model_width") return SweepDimension::model_width;
  if (s == "hyperparam_count") return SweepDimension::hyperparam_count;
  if (s == "population_k") return SweepDimension::population_k;
  throw std::invalid_argument("unknown dimension '" + s + "' (expected model_width, hyperparam_count or population_k)");
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::invalid_argument(join_lines(problems)), problems_(std::move(problems)) {}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::one_d_grid: return "one_d_grid";
    case Experiment::one_d_traj: return "one_d_traj";
    case Experiment::rotation: return "rotation";
    case Experiment::reweight: return "reweight";
    case Experiment::scaling: return "scaling";
  }
  return "?";
}

std::string to_string(SweepDimension d) {
  switch (d) {
    case SweepDimension::model_width: return "model_width";
    case SweepDimension::hyperparam_count: return "hyperparam_count";
    case SweepDimension::population_k: return "population_k";
  }
  return "?";
}

std::string ExperimentConfig::run_prefix() const { return to_string(experiment) + "/" + to_string(method); }

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "experiment", "method",  "seeds",  "sigma",   "tau",        "k",          "noise",         "parallel",
      "lr",         "meta_lr", "epochs", "steps",   "reps",       "batch",      "n",             "hidden",
      "weight_hidden", "order", "width", "true_angle", "rho",     "fd_delta",   "inner_lr",      "dimension",
      "grid",       "out",     "wall_clock", "dump_tape", "export_data", "jobs"};
  return keys;
}

RawOptions read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"config: cannot open '" + path + "'"});
  RawOptions raw;
  std::vector<std::string> problems;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(path + ":" + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    const auto key = canonical(trim(line.substr(0, eq)));
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end()) {
      problems.push_back(path + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
      continue;
    }
    raw[key] = {trim(line.substr(eq + 1))};
  }
  if (!problems.empty()) throw ConfigError(problems);
  return raw;
}

ExperimentConfig build_config(const RawOptions& raw, bool sweep) {
  ExperimentConfig c;
  std::vector<std::string> problems;
  if (sweep) c.experiment = Experiment::scaling;

  auto last = [&](const std::string& key) -> const std::string* {
    auto it = raw.find(key);
    if (it == raw.end() || it->second.empty()) return nullptr;
    return &it->second.back();
  };
  auto with = [&](const std::string& key, const std::function<void(const std::string&)>& f) {
    if (const auto* v = last(key)) {
      try {
        f(*v);
      } catch (const std::exception& e) {
        problems.push_back(key + ": " + e.what());
      }
    }
  };
  auto real = [&](const std::string& key, auto setter) {
    with(key, [&](const std::string& v) {
      double d;
      if (!to_double(v, d)) throw std::invalid_argument("not a number: '" + v + "'");
      setter(d);
    });
  };
  auto integer = [&](const std::string& key, auto setter) {
    with(key, [&](const std::string& v) {
      long long i;
      if (!to_long(v, i)) throw std::invalid_argument("not an integer: '" + v + "'");
      setter(i);
    });
  };
  auto flag = [&](const std::string& key, bool& dst) {
    with(key, [&](const std::string& v) {
      if (!to_bool(v, dst)) throw std::invalid_argument("not a boolean: '" + v + "'");
    });
  };
  auto positive_size = [&](const std::string& key, std::optional<std::size_t>& dst) {
    integer(key, [&](long long i) {
      if (i < 1) throw std::invalid_argument("must be >= 1");
      dst = static_cast<std::size_t>(i);
    });
  };

  with("experiment", [&](const std::string& v) { c.experiment = parse_experiment(v); });
  with("method", [&](const std::string& v) { c.method = parse_hypergrad_method(v); });
  if (auto it = raw.find("seeds"); it != raw.end()) {
    c.seeds.clear();
    for (const auto& s : split_list(it->second)) {
      long long i;
      if (!to_long(s, i) || i < 0)
        problems.push_back("seeds: not a non-negative integer: '" + s + "'");
      else
        c.seeds.push_back(static_cast<std::uint64_t>(i));
    }
    if (c.seeds.empty()) problems.push_back("seeds: empty list");
  }
  real("sigma", [&](double d) { c.sigma = d; });
  real("tau", [&](double d) { c.tau = d; });
  if (auto it = raw.find("k"); it != raw.end()) {
    for (const auto& s : split_list(it->second)) {
      long long i;
      if (!to_long(s, i))
        problems.push_back("k: not an integer: '" + s + "'");
      else
        c.k.push_back(static_cast<int>(i));
    }
  }
  with("noise", [&](const std::string& v) { c.noise = parse_noise_kind(v); });
  flag("parallel", c.parallel);
  real("lr", [&](double d) { c.lr = d; });
  real("meta_lr", [&](double d) { c.meta_lr = d; });
  integer("epochs", [&](long long i) { c.epochs = static_cast<int>(i); });
  integer("steps", [&](long long i) { c.steps = static_cast<int>(i); });
  integer("reps", [&](long long i) { c.reps = static_cast<int>(i); });
  positive_size("batch", c.batch);
  positive_size("n", c.n);
  positive_size("hidden", c.hidden);
  positive_size("weight_hidden", c.weight_hidden);
  with("order", [&](const std::string& v) { c.order = parse_update_order(v); });
  real("width", [&](double d) { c.width = d; });
  real("true_angle", [&](double d) { c.true_angle = d; });
  real("rho", [&](double d) { c.rho = d; });
  real("fd_delta", [&](double d) { c.fd_delta = d; });
  real("inner_lr", [&](double d) { c.inner_lr = d; });
  with("dimension", [&](const std::string& v) { c.dimension = parse_dimension(v); });
  if (auto it = raw.find("grid"); it != raw.end()) {
    for (const auto& s : split_list(it->second)) {
      double d;
      if (!to_double(s, d))
        problems.push_back("grid: not a number: '" + s + "'");
      else
        c.grid.push_back(d);
    }
  }
  with("out", [&](const std::string& v) { c.out = v; });
  flag("wall_clock", c.wall_clock);
  flag("dump_tape", c.dump_tape);
  with("export_data", [&](const std::string& v) { c.export_data = v; });
  integer("jobs", [&](long long i) { c.jobs = static_cast<int>(i); });

  for (const auto& [key, _] : raw)
    if (std::find(config_keys().begin(), config_keys().end(), key) == config_keys().end())
      problems.push_back(key + ": unknown option");

  try {
    validate(c, sweep);
  } catch (const ConfigError& e) {
    problems.insert(problems.end(), e.problems().begin(), e.problems().end());
  }
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

void validate(const ExperimentConfig& c, bool sweep) {
  std::vector<std::string> p;
  const bool one_d = c.experiment == Experiment::one_d_grid || c.experiment == Experiment::one_d_traj;
  if (c.method == HypergradMethod::oracle && !one_d) p.push_back("method: oracle is only available for one_d experiments");
  if (c.experiment == Experiment::one_d_grid && c.method != HypergradMethod::evograd &&
      c.method != HypergradMethod::evograd_factorized)
    p.push_back("method: one_d_grid estimates with evograd or evograd-factorized only");
  if (c.experiment == Experiment::one_d_traj && c.method == HypergradMethod::none)
    p.push_back("method: one_d_traj needs a hypergradient method");
  if (sweep && c.experiment != Experiment::scaling) p.push_back("experiment: sweep runs the scaling experiment only");
  if (!sweep && c.experiment == Experiment::scaling) p.push_back("experiment: use the sweep subcommand for scaling");
  if (c.seeds.empty()) p.push_back("seeds: at least one seed is required");
  if (c.sigma && !(*c.sigma >= 0.0)) p.push_back("sigma: must be >= 0");
  if (c.tau && !(*c.tau > 0.0)) p.push_back("tau: must be > 0");
  for (int k : c.k)
    if (k < 2) p.push_back("k: population size must be >= 2, got " + std::to_string(k));
  if (c.k.size() > 1 && c.experiment != Experiment::one_d_grid && c.experiment != Experiment::one_d_traj)
    p.push_back("k: several values are only meaningful for one_d experiments");
  if (c.lr && !(*c.lr > 0.0)) p.push_back("lr: must be > 0");
  if (c.meta_lr && !(*c.meta_lr > 0.0)) p.push_back("meta_lr: must be > 0");
  if (c.epochs && *c.epochs < 1) p.push_back("epochs: must be >= 1");
  if (c.steps && *c.steps < 1) p.push_back("steps: must be >= 1");
  if (c.reps && *c.reps < 2) p.push_back("reps: must be >= 2");
  if (c.n && c.experiment == Experiment::rotation && *c.n < 100) p.push_back("n: rotation needs n >= 100");
  if (!(c.width > 0.0)) p.push_back("width: must be > 0");
  if (!(c.rho >= 0.0 && c.rho <= 0.9)) p.push_back("rho: must be in [0, 0.9]");
  if (!(c.fd_delta > 0.0)) p.push_back("fd_delta: must be > 0");
  if (c.jobs < 1) p.push_back("jobs: must be >= 1");
  if (c.out.empty()) p.push_back("out: output path is empty");
  if (sweep) {
    if (!c.dimension) p.push_back("dimension: required for sweep");
    if (c.grid.empty()) p.push_back("grid: must be non-empty");
    for (double g : c.grid)
      if (!(g > 0.0)) p.push_back("grid: values must be > 0");
  } else {
    if (c.dimension) p.push_back("dimension: only valid for sweep");
    if (!c.grid.empty()) p.push_back("grid: only valid for sweep");
  }
  if (!p.empty()) throw ConfigError(p);
}

}  // namespace evograd
