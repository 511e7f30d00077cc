#pragma once

#include <functional>
#include <string>

#include "evograd/estimator.hpp"

namespace evograd {

/// (lambda - 1) / (lambda + 1)^3, the exact hypergradient of the 1-D problem
/// at its inner optimum x = 1 / (1 + lambda).
double oracle_hypergrad_1d(double lambda);

struct T1T2Config {
  double fd_delta = 1e-5;
  double inner_lr = 1.0;

  void validate() const;
};

/// dl_V/dlambda - inner_lr * v^T d2l_T/dtheta dlambda with v = dl_V/dtheta.
/// The mixed product comes from central differences of dl_T/dlambda at
/// theta +- delta * v/|v|, so only first-order sweeps are used. When v is
/// zero the product vanishes and only the direct term is returned.
HypergradResult t1t2_hypergrad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns,
                               const T1T2Config& cfg);

}  // namespace evograd
