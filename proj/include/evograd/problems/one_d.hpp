#pragma once

#include <cstdint>
#include <vector>

#include "evograd/estimator.hpp"
#include "evograd/meta.hpp"
#include "evograd/metrics.hpp"

namespace evograd::problems::one_d {

// f_T(x, lambda) = (x - 1)^2 + lambda x^2,  f_V(x) = (x - 0.5)^2.
double train_loss(double x, double lambda);
double val_loss(double x);
/// argmin_x f_T = 1 / (1 + lambda).
double inner_optimum(double lambda);

LossFns loss_fns();
ParamVector theta_of(double x);
HyperParams lambda_of(double lambda);

/// Gaussian N(0, 1) noise and tau = 0.5.
PerturbationConfig default_perturbation(int k);

struct GridPoint {
  double lambda = 0.0;
  int k = 0;
  int reps = 0;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
  double oracle = 0.0;
};

/// `reps` EvoGrad estimates at fixed lambda, each at a fresh x ~ N(0, 1).
std::vector<double> estimates(double lambda, const PerturbationConfig& cfg, int reps, Rng& rng);
GridPoint grid_point(double lambda, const PerturbationConfig& cfg, int reps, Rng& rng);

struct GridConfig {
  std::vector<double> lambdas;  // default 0.1, 0.2, ..., 2.0
  std::vector<int> ks{2, 10, 100};
  int reps = 100;
  double tau = 0.5;
  double sigma = 1.0;
};

std::vector<double> default_lambda_grid();
std::vector<GridPoint> run_grid(const GridConfig& cfg, std::uint64_t seed);

struct TrajectoryPoint {
  int step = 0;
  double x = 0.0;
  double lambda = 0.0;
  double f_val = 0.0;
};

struct TrajectoryConfig {
  double x0 = 2.0;
  double lambda0 = 2.0;
  int steps = 5;
  double lr = 0.1;
  double meta_lr = 0.1;
};

/// Alternating SGD: x on f_T, then lambda on the hypergradient at the new x.
/// Point 0 is the start.
std::vector<TrajectoryPoint> trajectory(const TrajectoryConfig& cfg, HypergradMethod method,
                                        const PerturbationConfig& evo, Rng& rng,
                                        std::vector<MetricsRecord>* records = nullptr);

struct Start {
  double x;
  double lambda;
};
std::vector<Start> default_starts();

}  // namespace evograd::problems::one_d
