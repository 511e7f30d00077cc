#pragma once

#include <span>
#include <string>
#include <vector>

#include "evograd/tape.hpp"
#include "evograd/tensor.hpp"

namespace evograd {

struct Segment {
  std::string name;
  Tensor value;
};

/// Named parameter tensors with a flat view of total dimension M.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  void add(std::string name, Tensor value) { segments_.push_back({std::move(name), std::move(value)}); }

  std::size_t size() const { return segments_.size(); }
  std::size_t total_dim() const;
  Segment& operator[](std::size_t i) { return segments_[i]; }
  const Segment& operator[](std::size_t i) const { return segments_[i]; }
  const Segment& by_name(std::string_view name) const;
  auto begin() const { return segments_.begin(); }
  auto end() const { return segments_.end(); }

  std::vector<double> flatten() const;
  /// Same segment layout, values taken from `flat`.
  ParamVector unflatten(std::span<const double> flat) const;
  bool same_structure(const ParamVector& other) const;

  /// Records every segment as a leaf on `tape`, in order.
  std::vector<Var> record(Tape& tape, LeafKind kind) const;

 private:
  std::vector<Segment> segments_;
};

Tensor flatten(std::span<const Tensor> parts);

enum class HyperRole { scalar_meta, network_meta };

/// Hyperparameters lambda of dimension N >= 1.
struct HyperParams {
  ParamVector values;
  HyperRole role = HyperRole::scalar_meta;

  std::size_t dim() const { return values.total_dim(); }
};

}  // namespace evograd
