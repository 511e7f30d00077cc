#include "evograd/baselines.hpp"

#include <cmath>

namespace evograd {

namespace {

struct LambdaGrad {
  Tensor grad;
  TapeStats stats;
};

// dl_T/dlambda with theta fixed. Theta enters as gradient-derived leaves:
// the shifted points were built from a backward result.
LambdaGrad train_lambda_grad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns) {
  Tape tape;
  auto th = theta.record(tape, LeafKind::gradient);
  auto lam = lambda.values.record(tape, LeafKind::parameter);
  Var loss = fns.train(tape, th, lam);
  if (!loss.value().is_scalar()) throw std::invalid_argument("training loss must be scalar");
  if (!std::isfinite(loss.value()[0])) throw NumericError("t1t2: training loss is not finite");
  return {flatten(tape.backward(loss, lam)), tape.stats()};
}

void keep_peak(TapeStats& peak, const TapeStats& s) {
  if (s.stored_bytes > peak.stored_bytes) {
    const auto sweeps = peak.backward_sweeps;
    peak = s;
    peak.backward_sweeps = sweeps;
  }
  peak.backward_sweeps += s.backward_sweeps;
}

}  // namespace

double oracle_hypergrad_1d(double lambda) {
  if (!(lambda > -1.0)) throw std::invalid_argument("oracle: lambda must be > -1 (pole at -1)");
  const double d = lambda + 1.0;
  return (lambda - 1.0) / (d * d * d);
}

void T1T2Config::validate() const {
  if (!(fd_delta > 0.0) || !std::isfinite(fd_delta)) throw std::invalid_argument("t1t2: fd_delta must be > 0");
  if (!std::isfinite(inner_lr)) throw std::invalid_argument("t1t2: inner_lr must be finite");
}

HypergradResult t1t2_hypergrad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns,
                               const T1T2Config& cfg) {
  cfg.validate();
  HypergradResult out;

  Tape tape;
  auto th = theta.record(tape, LeafKind::parameter);
  auto lam = lambda.values.record(tape, LeafKind::parameter);
  Var val = fns.val(tape, th, lam);
  if (!val.value().is_scalar()) throw std::invalid_argument("validation loss must be scalar");
  if (!std::isfinite(val.value()[0])) throw NumericError("t1t2: validation loss is not finite");
  std::vector<Var> wrt(th.begin(), th.end());
  wrt.insert(wrt.end(), lam.begin(), lam.end());
  auto grads = tape.backward(val, wrt);
  ++out.passes.forward;
  ++out.passes.backward;
  keep_peak(out.tape, tape.stats());
  out.val_loss = val.value()[0];

  const Tensor v = flatten(std::span<const Tensor>(grads.data(), th.size()));
  out.grad = flatten(std::span<const Tensor>(grads.data() + th.size(), lam.size()));
  const double vn = norm(v);
  if (vn == 0.0) return out;

  const auto base = theta.flatten();
  std::vector<double> plus(base.size()), minus(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double step = cfg.fd_delta * v[i] / vn;
    plus[i] = base[i] + step;
    minus[i] = base[i] - step;
  }
  const auto gp = train_lambda_grad(theta.unflatten(plus), lambda, fns);
  const auto gm = train_lambda_grad(theta.unflatten(minus), lambda, fns);
  out.passes.forward += 2;
  out.passes.backward += 2;
  keep_peak(out.tape, gp.stats);
  keep_peak(out.tape, gm.stats);

  const double scale = cfg.inner_lr * vn / (2.0 * cfg.fd_delta);
  for (std::size_t n = 0; n < out.grad.size(); ++n) out.grad[n] -= scale * (gp.grad[n] - gm.grad[n]);
  if (!out.grad.all_finite()) throw NumericError("t1t2: hypergradient is not finite");
  return out;
}

}  // namespace evograd
