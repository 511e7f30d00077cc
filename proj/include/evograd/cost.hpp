#pragma once

#include <cstdint>
#include <functional>

#include "evograd/meta.hpp"

namespace evograd {

struct UnrolledCost {
  Tensor grad;
  TapeStats tape;
};

/// A problem that cost_probe can drive. `losses` binds the batches of a given
/// step. `unrolled_t1t2`, when present, records the T1-T2 hypergradient as a
/// single differentiable graph (inner gradient written out as forward ops) and
/// reports what that graph retains.
struct CostProblem {
  std::function<MetaState()> init;
  std::function<LossFns(std::size_t step)> losses;
  std::function<UnrolledCost(const ParamVector& theta, const HyperParams& lambda, std::size_t step)> unrolled_t1t2;
};

struct CostReport {
  HypergradMethod method = HypergradMethod::evograd;
  std::size_t steps = 0;
  double median_step_ms = 0.0;
  std::size_t node_count = 0;    // peak over steps
  std::size_t stored_bytes = 0;  // peak over steps, tapes actually used
  // Bytes held by a graph that differentiates through the inner gradient.
  // Equal to stored_bytes for methods that never build one.
  std::size_t retained_bytes = 0;
  std::size_t retained_nodes = 0;
  std::int64_t forward_per_step = 0;
  std::int64_t backward_per_step = 0;
};

CostReport cost_probe(HypergradMethod method, const CostProblem& problem, std::size_t steps,
                      const MetaStepConfig& cfg, std::uint64_t seed);

double median(std::vector<double> values);

}  // namespace evograd
