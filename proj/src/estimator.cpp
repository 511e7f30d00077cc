#include "evograd/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <future>

namespace evograd {

namespace {

void check_loss(const Var& loss, std::string_view what) {
  if (!loss.value().is_scalar())
    throw std::invalid_argument(std::string(what) + " must be scalar, got shape " + shape_str(loss.shape()));
}

void merge_peak(TapeStats& peak, const TapeStats& s) {
  if (s.stored_bytes > peak.stored_bytes) {
    peak.stored_bytes = s.stored_bytes;
    peak.node_count = s.node_count;
    peak.leaf_bytes = s.leaf_bytes;
    peak.leaf_count = s.leaf_count;
  }
  peak.backward_sweeps += s.backward_sweeps;
}

struct CandidateGrad {
  double loss = 0.0;
  Tensor dloss_dlambda;
  TapeStats stats;
  bool connected = false;
};

CandidateGrad candidate_gradient(const ParamVector& candidate, const HyperParams& lambda, const LossFns& fns) {
  Tape tape;
  auto theta = candidate.record(tape, LeafKind::constant);
  auto lam = lambda.values.record(tape, LeafKind::parameter);
  Var loss = fns.train(tape, theta, lam);
  check_loss(loss, "training loss");
  CandidateGrad out;
  out.loss = loss.value()[0];
  out.connected = loss.requires_grad();
  out.dloss_dlambda = flatten(tape.backward(loss, lam));
  out.stats = tape.stats();
  return out;
}

}  // namespace

std::string to_string(NoiseKind kind) { return kind == NoiseKind::gaussian ? "gaussian" : "sign"; }

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "gaussian") return NoiseKind::gaussian;
  if (name == "sign" || name == "sign-gaussian") return NoiseKind::sign_gaussian;
  throw std::invalid_argument("unknown noise kind '" + name + "' (expected gaussian or sign)");
}

void PerturbationConfig::validate() const {
  std::string errors;
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) errors += " sigma must be >= 0;";
  if (!(tau > 0.0) || !std::isfinite(tau)) errors += " tau must be > 0;";
  if (k < 2) errors += " k must be >= 2;";
  if (!errors.empty()) throw std::invalid_argument("perturbation config:" + errors);
}

Population sample_population(const ParamVector& theta, const PerturbationConfig& cfg, Rng& rng) {
  cfg.validate();
  Population pop;
  pop.base = theta;
  pop.epsilons.reserve(static_cast<std::size_t>(cfg.k));
  pop.candidates.reserve(static_cast<std::size_t>(cfg.k));
  for (int k = 0; k < cfg.k; ++k) {
    ParamVector eps, cand;
    for (const auto& seg : theta) {
      Tensor e(seg.value.shape());
      Tensor c(seg.value.shape());
      for (std::size_t i = 0; i < e.size(); ++i) {
        const double z = rng.normal();
        if (cfg.noise == NoiseKind::gaussian) {
          e[i] = cfg.sigma * z;
        } else {
          e[i] = z < 0.0 ? -cfg.sigma : cfg.sigma;
        }
        c[i] = seg.value[i] + e[i];
      }
      // Store the realised offset so that candidate - base == epsilon exactly.
      for (std::size_t i = 0; i < e.size(); ++i) e[i] = c[i] - seg.value[i];
      eps.add(seg.name, std::move(e));
      cand.add(seg.name, std::move(c));
    }
    pop.epsilons.push_back(std::move(eps));
    pop.candidates.push_back(std::move(cand));
  }
  return pop;
}

FitnessWeights fitness_weights(std::span<const double> losses, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("fitness weights: tau must be > 0");
  if (losses.empty()) throw std::invalid_argument("fitness weights: no losses");
  for (std::size_t k = 0; k < losses.size(); ++k)
    if (!std::isfinite(losses[k])) throw NumericError("fitness weights: loss of candidate " + std::to_string(k) + " is not finite");
  FitnessWeights out;
  out.losses.assign(losses.begin(), losses.end());
  out.weights.resize(losses.size());
  const double lo = *std::min_element(losses.begin(), losses.end());
  double z = 0.0;
  for (std::size_t k = 0; k < losses.size(); ++k) z += (out.weights[k] = std::exp(-(losses[k] - lo) / tau));
  for (auto& w : out.weights) w /= z;
  return out;
}

Tensor softmax_jacobian(const FitnessWeights& w, double tau) {
  const std::size_t k = w.weights.size();
  Tensor j({k, k});
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      j.at(a, b) = -((a == b ? w.weights[a] : 0.0) - w.weights[a] * w.weights[b]) / tau;
  return j;
}

ParamVector combine(const Population& pop, const FitnessWeights& w) {
  if (w.weights.size() != pop.k())
    throw std::invalid_argument("combine: " + std::to_string(w.weights.size()) + " weights for population of " +
                                std::to_string(pop.k()));
  ParamVector out;
  for (std::size_t s = 0; s < pop.base.size(); ++s) {
    Tensor acc(pop.base[s].value.shape());
    for (std::size_t k = 0; k < pop.k(); ++k) {
      const Tensor& c = pop.candidates[k][s].value;
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w.weights[k] * c[i];
    }
    out.add(pop.base[s].name, std::move(acc));
  }
  return out;
}

std::vector<Var> combine(std::span<const std::vector<Var>> candidates, Var weights) {
  if (candidates.empty()) throw std::invalid_argument("combine: empty population");
  if (weights.value().size() != candidates.size())
    throw std::invalid_argument("combine: " + std::to_string(weights.value().size()) + " weights for population of " +
                                std::to_string(candidates.size()));
  const std::size_t segments = candidates.front().size();
  std::vector<Var> out;
  out.reserve(segments);
  std::vector<Var> items(candidates.size());
  for (std::size_t s = 0; s < segments; ++s) {
    for (std::size_t k = 0; k < candidates.size(); ++k) items[k] = candidates[k].at(s);
    out.push_back(affine_combine(weights, items));
  }
  return out;
}

HypergradResult evograd_hypergrad(const Population& pop, const HyperParams& lambda, const LossFns& fns,
                                  const PerturbationConfig& cfg, std::ostream* dump) {
  cfg.validate();
  Tape tape;
  HypergradResult out;
  auto lam = lambda.values.record(tape, LeafKind::parameter);

  // Candidates are detached leaves: no gradient with respect to theta is taken.
  std::vector<std::vector<Var>> cands;
  std::vector<Var> losses;
  cands.reserve(pop.k());
  losses.reserve(pop.k());
  for (std::size_t k = 0; k < pop.k(); ++k) {
    cands.push_back(pop.candidates[k].record(tape, LeafKind::constant));
    Var loss = fns.train(tape, cands.back(), lam);
    check_loss(loss, "training loss");
    if (!std::isfinite(loss.value()[0]))
      throw NumericError("evograd: loss of candidate " + std::to_string(k) + " is not finite");
    losses.push_back(loss);
    ++out.passes.forward;
  }

  Var stacked = stack(losses);
  Var weights = softmax(scalar_mul(stacked, -1.0 / cfg.tau));
  // theta* = base + sum_k w_k eps_k, equal to sum_k w_k theta_k since the
  // weights sum to one. Combining the offsets keeps the backward pass from
  // forming g.theta_k terms that nearly cancel inside the softmax Jacobian.
  const auto base = pop.base.record(tape, LeafKind::constant);
  std::vector<std::vector<Var>> offsets;
  offsets.reserve(pop.k());
  for (const auto& e : pop.epsilons) offsets.push_back(e.record(tape, LeafKind::constant));
  auto theta_star = combine(offsets, weights);
  for (std::size_t s = 0; s < theta_star.size(); ++s) theta_star[s] = add(base[s], theta_star[s]);
  Var val = fns.val(tape, theta_star, lam);
  check_loss(val, "validation loss");
  ++out.passes.forward;
  if (!std::isfinite(val.value()[0])) throw NumericError("evograd: validation loss is not finite");
  if (!val.requires_grad()) throw WiringError("evograd: hyperparameters have no path to the validation loss");

  out.grad = flatten(tape.backward(val, lam));
  ++out.passes.backward;
  if (!out.grad.all_finite()) throw NumericError("evograd: hypergradient is not finite");

  out.fitness.losses.assign(stacked.value().raw().begin(), stacked.value().raw().end());
  out.fitness.weights.assign(weights.value().raw().begin(), weights.value().raw().end());
  out.val_loss = val.value()[0];
  out.tape = tape.stats();
  if (dump) tape.dump(*dump);
  return out;
}

HypergradResult evograd_hypergrad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns,
                                  const PerturbationConfig& cfg, Rng& rng) {
  return evograd_hypergrad(sample_population(theta, cfg, rng), lambda, fns, cfg);
}

HypergradResult factorized_hypergrad(const Population& pop, const HyperParams& lambda, const LossFns& fns,
                                     const PerturbationConfig& cfg) {
  cfg.validate();
  const std::size_t k = pop.k();
  HypergradResult out;

  // Rows of dl/dlambda. Each candidate is independent; results are placed by
  // index so the reduction order never depends on scheduling.
  std::vector<CandidateGrad> rows(k);
  if (cfg.parallel && k > 1) {
    std::vector<std::future<CandidateGrad>> jobs;
    jobs.reserve(k);
    for (std::size_t i = 0; i < k; ++i)
      jobs.push_back(std::async(std::launch::async, candidate_gradient, std::cref(pop.candidates[i]),
                                std::cref(lambda), std::cref(fns)));
    for (std::size_t i = 0; i < k; ++i) rows[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < k; ++i) rows[i] = candidate_gradient(pop.candidates[i], lambda, fns);
  }

  std::vector<double> losses(k);
  bool connected = false;
  for (std::size_t i = 0; i < k; ++i) {
    losses[i] = rows[i].loss;
    connected = connected || rows[i].connected;
    merge_peak(out.tape, rows[i].stats);
    ++out.passes.forward;
    ++out.passes.backward;
  }
  out.fitness = fitness_weights(losses, cfg.tau);
  const Tensor jac = softmax_jacobian(out.fitness, cfg.tau);

  // Validation gradient at theta*, with theta* as a leaf.
  const ParamVector theta_star = combine(pop, out.fitness);
  Tape tape;
  auto ts = theta_star.record(tape, LeafKind::parameter);
  auto lam = lambda.values.record(tape, LeafKind::parameter);
  Var val = fns.val(tape, ts, lam);
  check_loss(val, "validation loss");
  ++out.passes.forward;
  if (!std::isfinite(val.value()[0])) throw NumericError("evograd: validation loss is not finite");
  bool direct_path = false;
  for (const auto& l : lam) direct_path = direct_path || tape.depends_on(val, l);
  if (!connected && !direct_path)
    throw WiringError("evograd: hyperparameters have no path to the validation loss");
  std::vector<Var> wrt(ts.begin(), ts.end());
  wrt.insert(wrt.end(), lam.begin(), lam.end());
  auto grads = tape.backward(val, wrt);
  ++out.passes.backward;
  merge_peak(out.tape, tape.stats());

  const Tensor g_val = flatten(std::span<const Tensor>(grads.data(), ts.size()));
  const Tensor direct = flatten(std::span<const Tensor>(grads.data() + ts.size(), lam.size()));

  // p = g_val^T E  (length K)
  std::vector<double> proj(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto eps = pop.epsilons[i].flatten();
    double acc = 0.0;
    for (std::size_t m = 0; m < eps.size(); ++m) acc += g_val[m] * eps[m];
    proj[i] = acc;
  }
  // q = p^T J  (length K)
  std::vector<double> q(k, 0.0);
  for (std::size_t b = 0; b < k; ++b)
    for (std::size_t a = 0; a < k; ++a) q[b] += proj[a] * jac.at(a, b);

  out.grad = direct;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t n = 0; n < out.grad.size(); ++n) out.grad[n] += q[i] * rows[i].dloss_dlambda[n];
  if (!out.grad.all_finite()) throw NumericError("evograd: hypergradient is not finite");
  out.val_loss = val.value()[0];
  return out;
}

HypergradResult factorized_hypergrad(const ParamVector& theta, const HyperParams& lambda, const LossFns& fns,
                                     const PerturbationConfig& cfg, Rng& rng) {
  return factorized_hypergrad(sample_population(theta, cfg, rng), lambda, fns, cfg);
}

}  // namespace evograd
