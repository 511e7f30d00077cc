#include "evograd/problems/one_d.hpp"

#include <cmath>

#include "evograd/baselines.hpp"

namespace evograd::problems::one_d {

double train_loss(double x, double lambda) { return (x - 1.0) * (x - 1.0) + lambda * x * x; }
double val_loss(double x) { return (x - 0.5) * (x - 0.5); }
double inner_optimum(double lambda) { return 1.0 / (1.0 + lambda); }

LossFns loss_fns() {
  LossFns f;
  f.train = [](Tape& t, std::span<const Var> th, std::span<const Var> lam) {
    Var d = sub(th[0], t.constant(Tensor::scalar(1.0)));
    return add(mul(d, d), mul(lam[0], mul(th[0], th[0])));
  };
  f.val = [](Tape& t, std::span<const Var> th, std::span<const Var>) {
    Var d = sub(th[0], t.constant(Tensor::scalar(0.5)));
    return mul(d, d);
  };
  return f;
}

ParamVector theta_of(double x) {
  ParamVector p;
  p.add("x", Tensor::scalar(x));
  return p;
}

HyperParams lambda_of(double lambda) {
  HyperParams h;
  h.values.add("lambda", Tensor::scalar(lambda));
  return h;
}

PerturbationConfig default_perturbation(int k) {
  PerturbationConfig c;
  c.sigma = 1.0;
  c.tau = 0.5;
  c.k = k;
  c.noise = NoiseKind::gaussian;
  return c;
}

std::vector<double> estimates(double lambda, const PerturbationConfig& cfg, int reps, Rng& rng) {
  const auto fns = loss_fns();
  const auto lam = lambda_of(lambda);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(reps));
  for (int r = 0; r < reps; ++r) {
    const double x = rng.normal();
    out.push_back(evograd_hypergrad(theta_of(x), lam, fns, cfg, rng).grad[0]);
  }
  return out;
}

GridPoint grid_point(double lambda, const PerturbationConfig& cfg, int reps, Rng& rng) {
  if (reps < 2) throw std::invalid_argument("one_d grid: reps must be >= 2");
  const auto e = estimates(lambda, cfg, reps, rng);
  double m = 0.0;
  for (double v : e) m += v;
  m /= double(e.size());
  double ss = 0.0;
  for (double v : e) ss += (v - m) * (v - m);
  GridPoint g;
  g.lambda = lambda;
  g.k = cfg.k;
  g.reps = reps;
  g.mean = m;
  g.std = std::sqrt(ss / double(e.size() - 1));
  g.oracle = oracle_hypergrad_1d(lambda);
  return g;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> out;
  for (int i = 1; i <= 20; ++i) out.push_back(i / 10.0);
  return out;
}

std::vector<GridPoint> run_grid(const GridConfig& cfg, std::uint64_t seed) {
  const auto lambdas = cfg.lambdas.empty() ? default_lambda_grid() : cfg.lambdas;
  std::vector<GridPoint> out;
  const Rng root(seed);
  for (int k : cfg.ks) {
    PerturbationConfig p = default_perturbation(k);
    p.tau = cfg.tau;
    p.sigma = cfg.sigma;
    Rng rng = root.split("grid").split(static_cast<std::uint64_t>(k));
    for (double l : lambdas) out.push_back(grid_point(l, p, cfg.reps, rng));
  }
  return out;
}

std::vector<TrajectoryPoint> trajectory(const TrajectoryConfig& cfg, HypergradMethod method,
                                        const PerturbationConfig& evo, Rng& rng,
                                        std::vector<MetricsRecord>* records) {
  MetaState state;
  state.theta = theta_of(cfg.x0);
  state.lambda = lambda_of(cfg.lambda0);
  state.theta_opt = make_optimizer(OptimizerKind::sgd, cfg.lr);
  state.lambda_opt = make_optimizer(OptimizerKind::sgd, cfg.meta_lr);

  MetaStepConfig mc;
  mc.method = method;
  mc.order = UpdateOrder::theta_first;
  mc.evo = evo;
  mc.oracle = [](const ParamVector&, const HyperParams& l) {
    return Tensor::scalar(oracle_hypergrad_1d(l.values[0].value[0]));
  };

  const auto fns = loss_fns();
  std::vector<TrajectoryPoint> out;
  out.push_back({0, cfg.x0, cfg.lambda0, val_loss(cfg.x0)});
  for (int s = 0; s < cfg.steps; ++s) {
    auto r = meta_step(state, fns, mc, rng);
    const double x = state.theta[0].value[0];
    const double l = state.lambda.values[0].value[0];
    out.push_back({s + 1, x, l, val_loss(x)});
    if (records) {
      r.record.step = s + 1;
      r.record.add("x", x);
      r.record.add("f_val", val_loss(x));
      records->push_back(std::move(r.record));
    }
  }
  return out;
}

std::vector<Start> default_starts() { return {{2.0, 2.0}, {-1.0, 0.5}, {1.5, 0.2}, {-0.5, 1.5}, {2.5, 1.0}}; }

}  // namespace evograd::problems::one_d
