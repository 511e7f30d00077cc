#pragma once

#include <iosfwd>
#include <vector>

#include "evograd/config.hpp"
#include "evograd/cost.hpp"
#include "evograd/metrics.hpp"
#include "evograd/problems/reweight.hpp"

namespace evograd {

struct RunOutput {
  std::vector<MetricsRecord> records;  // ordered by seed, then run, then step
};

/// Runs the configured experiment for every seed. Seeds may be spread over
/// `cfg.jobs` workers; results are collected in seed order.
RunOutput run_experiment(const ExperimentConfig& cfg);

/// Writes the EvoGrad tape of the first hypergradient the experiment would
/// compute (first seed, first batch).
void dump_first_tape(const ExperimentConfig& cfg, std::ostream& os);

/// Writes the first seed's training set as CSV (rotation and reweight only).
void export_dataset(const ExperimentConfig& cfg, std::ostream& os);

struct SweepPoint {
  SweepDimension dimension = SweepDimension::model_width;
  double grid_value = 0.0;
  std::size_t param_count = 0;       // M
  std::size_t hyperparam_count = 0;  // N
  int k = 2;
  CostReport evograd;
  std::optional<CostReport> t1t2;
};

/// Reweight-style problem the sweeps are built on, before the swept
/// dimension is applied.
problems::reweight::ReweightConfig sweep_base(SweepDimension dimension);

/// Runs cost_probe at every grid value. model_width scales the classifier's
/// hidden width and also probes T1-T2; hyperparam_count sets the weight-net
/// size to about the requested parameter count; population_k sets K.
std::vector<SweepPoint> scaling_sweep(SweepDimension dimension, const std::vector<double>& grid,
                                      const ExperimentConfig& base, std::uint64_t seed);

std::vector<MetricsRecord> sweep_records(const std::vector<SweepPoint>& points, std::uint64_t seed);

}  // namespace evograd
