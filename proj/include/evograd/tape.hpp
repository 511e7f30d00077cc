#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "evograd/tensor.hpp"

namespace evograd {

// Operator tags. There is deliberately no tag for a backward pass: gradients
// leave the tape as plain tensors and can only re-enter as constant leaves.
enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  scalar_mul,
  scale,
  matmul,
  transpose,
  reshape,
  relu,
  sigmoid,
  softmax,
  log_softmax,
  cross_entropy,
  mse,
  sum,
  mean,
  affine_combine,
  rotate2d,
  stack,
  normalize,
};

std::string_view op_name(Op op);

enum class LeafKind : std::uint8_t {
  constant,   // data, labels, detached parameters
  parameter,  // requires gradient
  gradient,   // constant whose value was produced by a backward pass
};

class Tape;

/// Handle to a node on a tape. Valid until the tape is reset.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;
  std::uint32_t generation = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
};

struct Node {
  std::uint32_t id = 0;
  Op op = Op::leaf;
  LeafKind leaf_kind = LeafKind::constant;
  bool requires_grad = false;
  std::vector<std::uint32_t> parents;
  Tensor value;
  // Local-gradient context: scalar_mul factor, or class targets for cross_entropy.
  double factor = 0.0;
  std::vector<std::size_t> targets;
};

/// Counters cover operator nodes on a gradient path, i.e. the activations a
/// reverse sweep has to keep alive. Leaves (inputs, parameters, detached
/// candidates) and constant-only intermediates are tallied separately.
struct TapeStats {
  std::size_t node_count = 0;
  std::size_t stored_bytes = 0;
  std::size_t leaf_count = 0;
  std::size_t leaf_bytes = 0;
  std::size_t backward_sweeps = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) { return leaf(std::move(value), LeafKind::constant); }
  Var parameter(Tensor value) { return leaf(std::move(value), LeafKind::parameter); }
  Var gradient_leaf(Tensor value) { return leaf(std::move(value), LeafKind::gradient); }
  Var leaf(Tensor value, LeafKind kind);

  /// Appends an operator node. Inputs must live on this tape.
  Var record(Op op, std::span<const Var> inputs, Tensor value, double factor = 0.0,
             std::vector<std::size_t> targets = {});

  /// Gradients of a scalar root with respect to each of `wrt`, by one reverse
  /// sweep. Vars with no path from the root get zero tensors.
  std::vector<Tensor> backward(Var root, std::span<const Var> wrt);

  /// True when `leaf` is an ancestor of `root`.
  bool depends_on(Var root, Var leaf) const;

  TapeStats stats() const;
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::uint32_t id) const { return nodes_.at(id); }
  std::size_t count_op(Op op) const;
  std::size_t count_leaves(LeafKind kind) const;

  /// Clears all nodes; Vars issued before the reset become invalid.
  void reset();

  /// One line per node: `id op parent-ids shape`.
  void dump(std::ostream& os) const;

  void check(const Var& v, std::string_view op) const;

 private:
  std::vector<Node> nodes_;
  std::uint32_t generation_ = 0;
  std::size_t sweeps_ = 0;
};

// Forward operators. Shape contracts:
//   add/sub/mul: identical shapes.
//   scalar_mul: constant factor times any tensor.
//   scale: 1-element var times any tensor.
//   matmul: (m,k)·(k,n) -> (m,n).
//   transpose: (m,n) -> (n,m).
//   reshape: same element count, new shape.
//   softmax/log_softmax: along the last axis (per row for matrices).
//   cross_entropy: logits (n,c) or (c) plus n class indices -> per-row losses (n).
//   mse: identical shapes -> scalar mean of squared differences.
//   sum/mean: any -> scalar.
//   affine_combine: weights (k) and k same-shaped tensors -> sum_k w_k x_k.
//   rotate2d: (n,2m) rows of consecutive (x,y) pairs and a 1-element angle in radians.
//   stack: k 1-element vars -> vector (k).
//   normalize: positive vector -> x / sum(x).
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scalar_mul(Var a, double factor);
Var scale(Var s, Var x);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var relu(Var a);
Var sigmoid(Var a);
Var softmax(Var a);
Var log_softmax(Var a);
Var cross_entropy(Var logits, std::span<const std::size_t> targets);
Var mse(Var a, Var b);
Var sum(Var a);
Var mean(Var a);
Var affine_combine(Var weights, std::span<const Var> items);
Var rotate2d(Var points, Var angle);
Var stack(std::span<const Var> scalars);
Var normalize(Var a);

}  // namespace evograd
