#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace evograd {

/// One measurement row per (run, seed, step). Optional fields are omitted
/// from the CSV when unset.
struct MetricsRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::int64_t step = 0;

  std::optional<double> loss_train;
  std::optional<double> loss_val;
  std::optional<double> accuracy;
  std::optional<double> lambda;  // scalar value, or L2 norm for network hyperparameters
  std::optional<double> hypergrad_norm;
  std::optional<double> wall_ms;

  // Cost counters; written only when has_cost is set.
  bool has_cost = false;
  std::int64_t tape_nodes = 0;
  std::int64_t stored_bytes = 0;
  std::int64_t forward_count = 0;
  std::int64_t backward_count = 0;

  // Experiment-specific values (x, f_V, oracle column, ...).
  std::vector<std::pair<std::string, double>> extra;

  void add(std::string name, double value) { extra.emplace_back(std::move(name), value); }
};

}  // namespace evograd
