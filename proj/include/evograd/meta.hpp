#pragma once

#include <functional>
#include <memory>
#include <string>

#include "evograd/baselines.hpp"
#include "evograd/estimator.hpp"
#include "evograd/metrics.hpp"
#include "evograd/optim.hpp"

namespace evograd {

enum class UpdateOrder { theta_first, lambda_first };
enum class HypergradMethod { evograd, evograd_factorized, t1t2, oracle, none };

std::string to_string(HypergradMethod m);
HypergradMethod parse_hypergrad_method(const std::string& name);
std::string to_string(UpdateOrder o);
UpdateOrder parse_update_order(const std::string& name);

using OracleFn = std::function<Tensor(const ParamVector& theta, const HyperParams& lambda)>;

struct MetaStepConfig {
  HypergradMethod method = HypergradMethod::evograd;
  UpdateOrder order = UpdateOrder::theta_first;
  PerturbationConfig evo;
  T1T2Config t1t2;
  OracleFn oracle;  // required for HypergradMethod::oracle
};

struct MetaState {
  ParamVector theta;
  HyperParams lambda;
  std::unique_ptr<Optimizer> theta_opt;
  std::unique_ptr<Optimizer> lambda_opt;
  std::int64_t step = 0;
};

struct MetaStepResult {
  MetricsRecord record;
  Tensor hypergrad;  // empty for HypergradMethod::none
  TapeStats peak;
  PassCounts passes;
};

/// One base update on the training loss (fresh tape, lambda held constant)
/// and one hyperparameter update from the configured hypergradient, in the
/// configured order. `rng` feeds the population noise.
MetaStepResult meta_step(MetaState& state, const LossFns& fns, const MetaStepConfig& cfg, Rng& rng);

/// Plain first-order update of theta on the training loss.
/// Returns the training loss before the update.
double base_step(MetaState& state, const LossFns& fns, TapeStats* stats = nullptr);

}  // namespace evograd
