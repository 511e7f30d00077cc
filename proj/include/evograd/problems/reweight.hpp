#pragma once

#include <cstdint>
#include <vector>

#include "evograd/cost.hpp"
#include "evograd/meta.hpp"
#include "evograd/metrics.hpp"
#include "evograd/problems/mlp.hpp"

namespace evograd::problems::reweight {

struct NoisyLabelTask {
  Dataset train;  // labels after corruption, flags in train.corrupted
  std::vector<std::size_t> clean_labels;
  Dataset val;    // clean
  Dataset test;   // clean
  double rho = 0.0;
};

struct TaskShape {
  std::size_t dim = 10;
  double separation = 1.5;
  std::size_t n_val = 500;
  std::size_t n_test = 4000;
};

/// Gaussian mixture with unit noise around class means drawn once from a
/// fixed stream and scaled by `separation`. round(rho * n) training labels
/// are replaced by a uniformly chosen different class.
NoisyLabelTask gen_noisy_classification(std::size_t n, std::size_t classes, double rho, std::uint64_t seed,
                                        const TaskShape& shape = {});

/// Segments a1 (1,h), c1 (1,h), a2 (h,1), c2 (1,1).
HyperParams init_weightnet(std::size_t hidden, Rng& rng);
std::size_t weightnet_param_count(std::size_t hidden);

/// sigmoid(relu(l a1 + c1) a2 + c2) for per-instance losses l (n,1).
Var weightnet(Var losses, std::span<const Var> omega);
Tensor weightnet(const HyperParams& omega, const Tensor& losses);

/// sum_i (v_i / sum_j v_j) ce_i with v = weightnet(ce). The weight net sees
/// the loss values only, so no gradient reaches theta through its input.
Var weighted_loss(Tape& tape, std::span<const Var> theta, std::span<const Var> omega, const Dataset& batch);

/// Weighted training loss and mean validation cross entropy.
LossFns reweight_losses(const Dataset& train_batch, const Dataset& val_batch);
/// Unweighted mean cross entropy for both.
LossFns plain_losses(const Dataset& train_batch, const Dataset& val_batch);

/// T1-T2 hypergradient recorded as one graph: the training gradient of the
/// weighted loss is written out with forward operators, theta' = theta -
/// alpha * grad, and the validation loss at theta' is swept back to omega.
/// Exact for this model, so it also serves as a reference for the
/// finite-difference path.
UnrolledCost unrolled_t1t2(const ParamVector& theta, const HyperParams& omega, const Dataset& train_batch,
                           const Dataset& val_batch, double alpha);

struct ReweightConfig {
  std::size_t n = 1000;
  std::size_t classes = 4;
  double rho = 0.4;
  TaskShape shape;
  std::size_t hidden = 64;
  std::size_t weight_hidden = 32;
  int epochs = 40;
  std::size_t batch = 64;
  double lr = 0.05;
  double momentum = 0.9;
  std::vector<int> lr_decay_epochs{30, 36};
  double lr_decay = 0.1;
  double meta_lr = 1e-2;
  OptimizerKind meta_optimizer = OptimizerKind::adam;
  HypergradMethod method = HypergradMethod::evograd;
  UpdateOrder order = UpdateOrder::lambda_first;
  PerturbationConfig evo;
  T1T2Config t1t2;
  std::string run_id = "reweight";
};

struct ReweightResult {
  double test_accuracy = 0.0;
  double mean_weight_clean = 0.0;
  double mean_weight_noisy = 0.0;  // NaN when nothing is corrupted
  double initial_hypergrad_norm = 0.0;
  std::vector<MetricsRecord> records;
};

/// HypergradMethod::none trains on the unweighted mean loss.
ReweightResult run_reweight_experiment(const ReweightConfig& cfg, std::uint64_t seed);

/// Fixed-batch problem for cost probing. Batches are drawn per step from the
/// task; `theta_lr` is the base SGD step also used as alpha in the unrolled
/// graph.
CostProblem cost_problem(const ReweightConfig& cfg, std::uint64_t seed);

}  // namespace evograd::problems::reweight
