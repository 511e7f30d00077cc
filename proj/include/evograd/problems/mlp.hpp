#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "evograd/params.hpp"
#include "evograd/rng.hpp"
#include "evograd/tape.hpp"

namespace evograd::problems {

/// Labelled rows. `corrupted` is empty or one flag per row.
struct Dataset {
  Tensor x;  // (n, features)
  std::vector<std::size_t> y;
  std::vector<std::uint8_t> corrupted;

  std::size_t size() const { return y.size(); }
  Dataset rows(std::span<const std::size_t> index) const;
};

/// One row per instance: features..., label, corrupted.
void write_dataset_csv(std::ostream& os, const Dataset& d);

struct MlpSpec {
  std::size_t in = 0;
  std::size_t hidden = 0;
  std::size_t out = 0;

  std::size_t param_count() const { return in * hidden + hidden + hidden * out + out; }
};

/// Segments w1 (in,h), b1 (1,h), w2 (h,out), b2 (1,out). He-scaled first
/// layer, 1/sqrt(h) second layer, zero biases.
ParamVector init_mlp(const MlpSpec& spec, Rng& rng);

/// z + 1 b for z (n,m) and b (1,m).
Var add_bias(Var z, Var b);

/// relu(x w1 + b1) w2 + b2. `p` holds the four segments in init_mlp order.
Var mlp_logits(Var x, std::span<const Var> p);

Tensor mlp_logits(const ParamVector& theta, const Tensor& x);
double accuracy(const ParamVector& theta, const Dataset& d);
double accuracy(const Tensor& logits, std::span<const std::size_t> y);

/// Mean cross entropy of the MLP on (x, y).
Var mean_ce(Tape& tape, std::span<const Var> theta, const Tensor& x, std::span<const std::size_t> y);

/// Batch index lists for one epoch: a fresh permutation cut into chunks.
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng);

/// `count` indices drawn uniformly with replacement.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, Rng& rng);

}  // namespace evograd::problems
