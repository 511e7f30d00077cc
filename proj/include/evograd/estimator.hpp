#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "evograd/params.hpp"
#include "evograd/rng.hpp"
#include "evograd/tape.hpp"

namespace evograd {

/// Raised when a loss or estimate turns non-finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when the hyperparameters cannot influence the validation loss.
class WiringError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class NoiseKind { gaussian, sign_gaussian };

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

struct PerturbationConfig {
  double sigma = 0.001;  // standard deviation (gaussian) or magnitude (sign)
  double tau = 0.05;
  int k = 2;
  NoiseKind noise = NoiseKind::sign_gaussian;
  // Evaluate candidate losses on worker threads in the factorized path.
  bool parallel = false;

  void validate() const;
};

struct Population {
  ParamVector base;
  std::vector<ParamVector> epsilons;
  std::vector<ParamVector> candidates;

  std::size_t k() const { return candidates.size(); }
};

struct FitnessWeights {
  std::vector<double> weights;
  std::vector<double> losses;
};

struct PassCounts {
  std::int64_t forward = 0;
  std::int64_t backward = 0;

  PassCounts& operator+=(const PassCounts& o) {
    forward += o.forward;
    backward += o.backward;
    return *this;
  }
};

/// Loss callbacks. Both receive theta and lambda as vars on the caller's tape
/// (segment order matches the ParamVector/HyperParams layout) and must return
/// a scalar var. Batches are bound into the closures.
struct LossFns {
  std::function<Var(Tape&, std::span<const Var> theta, std::span<const Var> lambda)> train;
  std::function<Var(Tape&, std::span<const Var> theta, std::span<const Var> lambda)> val;
};

struct HypergradResult {
  Tensor grad;          // dl_V/dlambda, flattened to N
  TapeStats tape;       // peak over the tapes this estimate used
  PassCounts passes;
  FitnessWeights fitness;
  double val_loss = 0.0;
};

Population sample_population(const ParamVector& theta, const PerturbationConfig& cfg, Rng& rng);

/// softmax(-losses / tau), max-shifted.
FitnessWeights fitness_weights(std::span<const double> losses, double tau);

/// dw/dl for w = softmax(-l/tau): J[i][j] = -(w_i [i==j] - w_i w_j) / tau.
Tensor softmax_jacobian(const FitnessWeights& w, double tau);

/// theta* = sum_k w_k theta_k, computed off-tape.
ParamVector combine(const Population& pop, const FitnessWeights& w);

/// theta* recorded on the tape so gradients reach the weights.
std::vector<Var> combine(std::span<const std::vector<Var>> candidates, Var weights);

/// Direct estimate: one tape holding the K candidate losses, the fitness
/// softmax, the affine combination and the validation loss, swept once.
/// When `dump` is given the finished tape is written to it.
HypergradResult evograd_hypergrad(const Population& pop, const HyperParams& lambda, const LossFns& fns,
                                  const PerturbationConfig& cfg, std::ostream* dump = nullptr);
HypergradResult evograd_hypergrad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns,
                                  const PerturbationConfig& cfg, Rng& rng);

/// Same quantity assembled from its factors: the validation gradient at
/// theta* projected onto the noise matrix, the softmax Jacobian, and K
/// independent candidate-loss gradients with respect to lambda.
HypergradResult factorized_hypergrad(const Population& pop, const HyperParams& lambda, const LossFns& fns,
                                     const PerturbationConfig& cfg);
HypergradResult factorized_hypergrad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns,
                                     const PerturbationConfig& cfg, Rng& rng);

}  // namespace evograd
