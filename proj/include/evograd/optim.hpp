#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "evograd/params.hpp"

namespace evograd {

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// In-place update; `grads` holds one tensor per segment.
  virtual void step(ParamVector& params, std::span<const Tensor> grads) = 0;
  virtual void set_learning_rate(double lr) = 0;
  virtual double learning_rate() const = 0;
};

class Sgd final : public Optimizer {
 public:
  explicit Sgd(double lr, double momentum = 0.0) : lr_(lr), momentum_(momentum) {}
  void step(ParamVector& params, std::span<const Tensor> grads) override;
  void set_learning_rate(double lr) override { lr_ = lr; }
  double learning_rate() const override { return lr_; }

 private:
  double lr_;
  double momentum_;
  std::vector<Tensor> velocity_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  void step(ParamVector& params, std::span<const Tensor> grads) override;
  void set_learning_rate(double lr) override { lr_ = lr; }
  double learning_rate() const override { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Tensor> m_, v_;
};

enum class OptimizerKind { sgd, adam };

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr, double momentum = 0.0);
OptimizerKind parse_optimizer_kind(const std::string& name);

}  // namespace evograd
