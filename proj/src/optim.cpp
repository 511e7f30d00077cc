#include "evograd/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace evograd {

namespace {

void check_grads(const ParamVector& params, std::span<const Tensor> grads) {
  if (grads.size() != params.size()) throw std::invalid_argument("optimizer: gradient/segment count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (grads[i].size() != params[i].value.size())
      throw std::invalid_argument("optimizer: gradient size mismatch in segment " + params[i].name);
}

}  // namespace

void Sgd::step(ParamVector& params, std::span<const Tensor> grads) {
  check_grads(params, grads);
  if (momentum_ == 0.0) {
    for (std::size_t s = 0; s < params.size(); ++s) {
      auto& p = params[s].value;
      for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr_ * grads[s][i];
    }
    return;
  }
  if (velocity_.empty())
    for (std::size_t s = 0; s < params.size(); ++s) velocity_.emplace_back(params[s].value.shape());
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = params[s].value;
    auto& v = velocity_[s];
    for (std::size_t i = 0; i < p.size(); ++i) {
      v[i] = momentum_ * v[i] + grads[s][i];
      p[i] -= lr_ * v[i];
    }
  }
}

void Adam::step(ParamVector& params, std::span<const Tensor> grads) {
  check_grads(params, grads);
  if (m_.empty()) {
    for (std::size_t s = 0; s < params.size(); ++s) {
      m_.emplace_back(params[s].value.shape());
      v_.emplace_back(params[s].value.shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t s = 0; s < params.size(); ++s) {
    auto& p = params[s].value;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[s][i];
      m_[s][i] = beta1_ * m_[s][i] + (1.0 - beta1_) * g;
      v_[s][i] = beta2_ * v_[s][i] + (1.0 - beta2_) * g * g;
      p[i] -= lr_ * (m_[s][i] / c1) / (std::sqrt(v_[s][i] / c2) + eps_);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double lr, double momentum) {
  switch (kind) {
    case OptimizerKind::sgd: return std::make_unique<Sgd>(lr, momentum);
    case OptimizerKind::adam: return std::make_unique<Adam>(lr);
  }
  throw std::invalid_argument("unknown optimizer");
}

OptimizerKind parse_optimizer_kind(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw std::invalid_argument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

}  // namespace evograd
