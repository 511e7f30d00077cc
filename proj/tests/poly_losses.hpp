#pragma once

#include <array>

#include "evograd/estimator.hpp"

namespace evograd::testing::poly {

// l_T = l0 th0^3 + l1 th1^3 + l0 l1 th0 th1,  l_V = (th0 - 1)^2 + th0 th1 + l0 th1.
inline LossFns cubic_fns() {
  LossFns f;
  f.train = [](Tape&, std::span<const Var> th, std::span<const Var> lam) {
    Var a = th[0], b = th[1];
    Var l0 = lam[0], l1 = lam[1];
    Var x = mul(l0, mul(a, mul(a, a)));
    Var y = mul(l1, mul(b, mul(b, b)));
    Var z = mul(mul(l0, l1), mul(a, b));
    return add(add(x, y), z);
  };
  f.val = [](Tape& t, std::span<const Var> th, std::span<const Var> lam) {
    Var d = sub(th[0], t.constant(Tensor::scalar(1.0)));
    return add(add(mul(d, d), mul(th[0], th[1])), mul(lam[0], th[1]));
  };
  return f;
}

inline ParamVector cubic_theta(double a, double b) {
  ParamVector p;
  p.add("a", Tensor::scalar(a));
  p.add("b", Tensor::scalar(b));
  return p;
}

inline HyperParams cubic_lambda(double l0, double l1) {
  HyperParams h;
  h.values.add("l0", Tensor::scalar(l0));
  h.values.add("l1", Tensor::scalar(l1));
  return h;
}

// Closed form of direct - lr * v^T d2l_T/dtheta dlambda for cubic_fns.
inline std::array<double, 2> cubic_expected(double a, double b, double l0, double l1, double lr) {
  const double v0 = 2 * (a - 1) + b, v1 = a + l0;
  const double m00 = 3 * a * a + l1 * b, m10 = l1 * a;  // d/dtheta_i of dl_T/dl0
  const double m01 = l0 * b, m11 = 3 * b * b + l0 * a;  // d/dtheta_i of dl_T/dl1
  return {b - lr * (v0 * m00 + v1 * m10), 0.0 - lr * (v0 * m01 + v1 * m11)};
}

}  // namespace evograd::testing::poly
