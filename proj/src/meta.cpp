#include "evograd/meta.hpp"

#include <chrono>
#include <cmath>

namespace evograd {

std::string to_string(HypergradMethod m) {
  switch (m) {
    case HypergradMethod::evograd: return "evograd";
    case HypergradMethod::evograd_factorized: return "evograd-factorized";
    case HypergradMethod::t1t2: return "t1t2";
    case HypergradMethod::oracle: return "oracle";
    case HypergradMethod::none: return "baseline-no-meta";
  }
  return "?";
}

HypergradMethod parse_hypergrad_method(const std::string& name) {
  if (name == "evograd") return HypergradMethod::evograd;
  if (name == "evograd-factorized" || name == "factorized") return HypergradMethod::evograd_factorized;
  if (name == "t1t2") return HypergradMethod::t1t2;
  if (name == "oracle") return HypergradMethod::oracle;
  if (name == "baseline-no-meta" || name == "none") return HypergradMethod::none;
  throw std::invalid_argument("unknown method '" + name +
                              "' (expected evograd, evograd-factorized, t1t2, oracle or baseline-no-meta)");
}

std::string to_string(UpdateOrder o) { return o == UpdateOrder::theta_first ? "theta-first" : "lambda-first"; }

UpdateOrder parse_update_order(const std::string& name) {
  if (name == "theta-first") return UpdateOrder::theta_first;
  if (name == "lambda-first") return UpdateOrder::lambda_first;
  throw std::invalid_argument("unknown update order '" + name + "' (expected theta-first or lambda-first)");
}

double base_step(MetaState& state, const LossFns& fns, TapeStats* stats) {
  Tape tape;
  auto th = state.theta.record(tape, LeafKind::parameter);
  auto lam = state.lambda.values.record(tape, LeafKind::constant);
  Var loss = fns.train(tape, th, lam);
  if (!loss.value().is_scalar()) throw std::invalid_argument("training loss must be scalar");
  const double value = loss.value()[0];
  if (!std::isfinite(value)) throw NumericError("base step: training loss is not finite");
  auto grads = tape.backward(loss, th);
  state.theta_opt->step(state.theta, grads);
  if (stats) *stats = tape.stats();
  return value;
}

namespace {

HypergradResult hypergradient(const MetaState& state, const LossFns& fns, const MetaStepConfig& cfg, Rng& rng) {
  switch (cfg.method) {
    case HypergradMethod::evograd: return evograd_hypergrad(state.theta, state.lambda, fns, cfg.evo, rng);
    case HypergradMethod::evograd_factorized:
      return factorized_hypergrad(state.theta, state.lambda, fns, cfg.evo, rng);
    case HypergradMethod::t1t2: return t1t2_hypergrad(state.theta, state.lambda, fns, cfg.t1t2);
    case HypergradMethod::oracle: {
      if (!cfg.oracle) throw std::invalid_argument("meta step: oracle method without an oracle");
      HypergradResult r;
      r.grad = cfg.oracle(state.theta, state.lambda);
      r.val_loss = std::nan("");
      return r;
    }
    case HypergradMethod::none: break;
  }
  throw std::logic_error("meta step: no hypergradient for this method");
}

void apply_lambda(MetaState& state, const Tensor& grad) {
  std::vector<Tensor> parts;
  std::size_t off = 0;
  for (const auto& seg : state.lambda.values) {
    const std::size_t n = seg.value.size();
    parts.emplace_back(seg.value.shape(), std::vector<double>(grad.raw().begin() + off, grad.raw().begin() + off + n));
    off += n;
  }
  state.lambda_opt->step(state.lambda.values, parts);
}

double lambda_snapshot(const HyperParams& lambda) {
  if (lambda.dim() == 1) return lambda.values[0].value[0];
  return norm(Tensor::vector(lambda.values.flatten()));
}

}  // namespace

MetaStepResult meta_step(MetaState& state, const LossFns& fns, const MetaStepConfig& cfg, Rng& rng) {
  MetaStepResult out;
  const auto t0 = std::chrono::steady_clock::now();

  TapeStats base_stats;
  double train_loss = 0.0;
  HypergradResult hg;
  const bool meta = cfg.method != HypergradMethod::none;

  auto do_meta = [&] {
    hg = hypergradient(state, fns, cfg, rng);
    if (hg.grad.size() != state.lambda.dim())
      throw std::invalid_argument("meta step: hypergradient has " + std::to_string(hg.grad.size()) +
                                  " entries, lambda has " + std::to_string(state.lambda.dim()));
    if (!hg.grad.all_finite()) throw NumericError("meta step: hypergradient is not finite");
    apply_lambda(state, hg.grad);
  };

  if (meta && cfg.order == UpdateOrder::lambda_first) do_meta();
  train_loss = base_step(state, fns, &base_stats);
  if (meta && cfg.order == UpdateOrder::theta_first) do_meta();

  const auto t1 = std::chrono::steady_clock::now();

  out.passes = hg.passes;
  out.passes.forward += 1;
  out.passes.backward += 1;
  out.peak = hg.tape.stored_bytes >= base_stats.stored_bytes ? hg.tape : base_stats;
  out.hypergrad = hg.grad;

  auto& rec = out.record;
  rec.step = state.step++;
  rec.loss_train = train_loss;
  if (meta) {
    if (std::isfinite(hg.val_loss)) rec.loss_val = hg.val_loss;
    rec.lambda = lambda_snapshot(state.lambda);
    rec.hypergrad_norm = norm(hg.grad);
  }
  rec.has_cost = true;
  rec.tape_nodes = static_cast<std::int64_t>(out.peak.node_count);
  rec.stored_bytes = static_cast<std::int64_t>(out.peak.stored_bytes);
  rec.forward_count = out.passes.forward;
  rec.backward_count = out.passes.backward;
  rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  return out;
}

}  // namespace evograd
