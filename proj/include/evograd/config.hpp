#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "evograd/meta.hpp"

namespace evograd {

/// All field problems found in one validation pass, one per line.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

enum class Experiment { one_d_grid, one_d_traj, rotation, reweight, scaling };
enum class SweepDimension { model_width, hyperparam_count, population_k };

std::string to_string(Experiment e);
std::string to_string(SweepDimension d);

struct ExperimentConfig {
  Experiment experiment = Experiment::one_d_grid;
  HypergradMethod method = HypergradMethod::evograd;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};

  // Perturbation settings. Unset fields take the experiment's default.
  std::optional<double> sigma;
  std::optional<double> tau;
  std::vector<int> k;
  std::optional<NoiseKind> noise;
  bool parallel = false;

  std::optional<double> lr;
  std::optional<double> meta_lr;
  std::optional<int> epochs;
  std::optional<int> steps;
  std::optional<int> reps;
  std::optional<std::size_t> batch;
  std::optional<std::size_t> n;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> weight_hidden;
  std::optional<UpdateOrder> order;
  double width = 1.0;
  double true_angle = 30.0;
  double rho = 0.4;
  double fd_delta = 1e-5;
  double inner_lr = 1.0;

  // Sweep only.
  std::optional<SweepDimension> dimension;
  std::vector<double> grid;

  std::string out = "metrics.csv";
  bool wall_clock = false;
  bool dump_tape = false;
  std::string export_data;
  int jobs = 1;

  std::string run_prefix() const;
};

/// Raw option values keyed by canonical name ('-' replaced by '_'). Later
/// sources override earlier ones key by key.
using RawOptions = std::map<std::string, std::vector<std::string>>;

/// Reads `key = value` lines; '#' starts a comment. Values may be
/// comma-separated lists.
RawOptions read_config_file(const std::string& path);

/// Keys accepted by run and sweep.
const std::vector<std::string>& config_keys();

/// Builds and validates; throws ConfigError listing every bad field.
ExperimentConfig build_config(const RawOptions& raw, bool sweep);

void validate(const ExperimentConfig& cfg, bool sweep);

}  // namespace evograd
