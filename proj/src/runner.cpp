#include "evograd/runner.hpp"

#include <cmath>
#include <cstdio>
#include <future>
#include <ostream>

#include "evograd/csv.hpp"
#include "evograd/problems/one_d.hpp"
#include "evograd/problems/rotation.hpp"

namespace evograd {

namespace {

using problems::reweight::ReweightConfig;
using problems::rotation::RotationConfig;

PerturbationConfig practical_perturbation(const ExperimentConfig& c) {
  PerturbationConfig p;  // sign noise, sigma 0.001, tau 0.05, K 2
  if (c.sigma) p.sigma = *c.sigma;
  if (c.tau) p.tau = *c.tau;
  if (!c.k.empty()) p.k = c.k.front();
  if (c.noise) p.noise = *c.noise;
  p.parallel = c.parallel;
  return p;
}

PerturbationConfig one_d_perturbation(const ExperimentConfig& c, int k) {
  PerturbationConfig p = problems::one_d::default_perturbation(k);
  if (c.sigma) p.sigma = *c.sigma;
  if (c.tau) p.tau = *c.tau;
  if (c.noise) p.noise = *c.noise;
  p.parallel = c.parallel;
  return p;
}

RotationConfig rotation_config(const ExperimentConfig& c) {
  RotationConfig r;
  r.true_angle = c.true_angle;
  r.method = c.method;
  r.evo = practical_perturbation(c);
  r.t1t2 = {c.fd_delta, c.inner_lr};
  if (c.n) r.n = *c.n;
  if (c.epochs) r.epochs = *c.epochs;
  if (c.batch) r.batch = *c.batch;
  if (c.lr) r.lr = *c.lr;
  if (c.meta_lr) r.meta_lr = *c.meta_lr;
  if (c.order) r.order = *c.order;
  r.hidden = c.hidden ? *c.hidden : static_cast<std::size_t>(std::lround(double(r.hidden) * c.width));
  r.run_id = c.run_prefix();
  return r;
}

ReweightConfig reweight_config(const ExperimentConfig& c) {
  ReweightConfig r;
  r.rho = c.rho;
  r.method = c.method;
  r.evo = practical_perturbation(c);
  r.t1t2 = {c.fd_delta, c.inner_lr};
  if (c.n) r.n = *c.n;
  if (c.epochs) r.epochs = *c.epochs;
  if (c.batch) r.batch = *c.batch;
  if (c.lr) r.lr = *c.lr;
  if (c.meta_lr) r.meta_lr = *c.meta_lr;
  if (c.order) r.order = *c.order;
  if (c.weight_hidden) r.weight_hidden = *c.weight_hidden;
  r.hidden = c.hidden ? *c.hidden : static_cast<std::size_t>(std::lround(double(r.hidden) * c.width));
  char tag[32];
  std::snprintf(tag, sizeof tag, "/rho=%g", c.rho);
  r.run_id = c.run_prefix() + tag;
  return r;
}

std::string k_tag(int k) { return "k=" + std::to_string(k); }

std::vector<MetricsRecord> run_grid(const ExperimentConfig& c, std::uint64_t seed) {
  problems::one_d::GridConfig g;
  g.ks = c.k.empty() ? std::vector<int>{2, 10, 100} : c.k;
  g.reps = c.reps.value_or(100);
  std::vector<MetricsRecord> out;
  const Rng root(seed);
  for (int k : g.ks) {
    const auto p = one_d_perturbation(c, k);
    Rng rng = root.split("grid").split(static_cast<std::uint64_t>(k));
    const auto lambdas = problems::one_d::default_lambda_grid();
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
      const auto pt = problems::one_d::grid_point(lambdas[i], p, g.reps, rng);
      MetricsRecord r;
      r.run_id = c.run_prefix() + "/" + k_tag(k);
      r.seed = seed;
      r.step = static_cast<std::int64_t>(i);
      r.lambda = pt.lambda;
      r.add("k", k);
      r.add("mean", pt.mean);
      r.add("std", pt.std);
      r.add("oracle", pt.oracle);
      r.add("reps", pt.reps);
      out.push_back(std::move(r));
    }
  }
  return out;
}

std::vector<MetricsRecord> run_traj(const ExperimentConfig& c, std::uint64_t seed) {
  std::vector<MetricsRecord> out;
  problems::one_d::TrajectoryConfig tc;
  tc.steps = c.steps.value_or(5);
  tc.lr = c.lr.value_or(0.1);
  tc.meta_lr = c.meta_lr.value_or(tc.lr);
  const auto ks = c.k.empty() ? std::vector<int>{100} : c.k;
  const auto starts = problems::one_d::default_starts();
  const Rng root(seed);

  auto emit = [&](const std::string& run_id, std::size_t start, std::vector<MetricsRecord>& recs,
                  const problems::one_d::TrajectoryPoint& p0) {
    MetricsRecord first;
    first.run_id = run_id;
    first.seed = seed;
    first.step = 0;
    first.lambda = p0.lambda;
    first.add("x", p0.x);
    first.add("f_val", p0.f_val);
    first.add("start", double(start));
    out.push_back(std::move(first));
    for (auto& r : recs) {
      r.run_id = run_id;
      r.seed = seed;
      out.push_back(std::move(r));
    }
  };

  for (std::size_t s = 0; s < starts.size(); ++s) {
    tc.x0 = starts[s].x;
    tc.lambda0 = starts[s].lambda;
    const std::string tag = "/start=" + std::to_string(s);
    if (c.method == HypergradMethod::oracle) {
      std::vector<MetricsRecord> recs;
      Rng rng = root.split("trajectory");
      auto path = problems::one_d::trajectory(tc, HypergradMethod::oracle, one_d_perturbation(c, 2), rng, &recs);
      emit("one_d_traj/oracle" + tag, s, recs, path.front());
      continue;
    }
    for (int k : ks) {
      std::vector<MetricsRecord> recs;
      Rng rng = root.split("trajectory").split(static_cast<std::uint64_t>(k)).split(static_cast<std::uint64_t>(s));
      auto path = problems::one_d::trajectory(tc, c.method, one_d_perturbation(c, k), rng, &recs);
      emit(c.run_prefix() + "/" + k_tag(k) + tag, s, recs, path.front());
    }
    std::vector<MetricsRecord> recs;
    Rng rng = root.split("oracle");
    auto path = problems::one_d::trajectory(tc, HypergradMethod::oracle, one_d_perturbation(c, 2), rng, &recs);
    emit("one_d_traj/oracle" + tag, s, recs, path.front());
  }
  return out;
}

std::vector<MetricsRecord> run_rotation(const ExperimentConfig& c, std::uint64_t seed) {
  auto res = problems::rotation::run_rotation_experiment(rotation_config(c), seed);
  auto& last = res.records.back();
  last.add("test_accuracy", res.test_accuracy);
  last.add("same_orientation_accuracy", res.same_orientation_accuracy);
  if (c.method != HypergradMethod::none) last.add("final_angle_deg", res.final_angle);
  return std::move(res.records);
}

std::vector<MetricsRecord> run_reweight(const ExperimentConfig& c, std::uint64_t seed) {
  auto res = problems::reweight::run_reweight_experiment(reweight_config(c), seed);
  res.records.back().add("test_accuracy", res.test_accuracy);
  return std::move(res.records);
}

std::vector<MetricsRecord> run_seed(const ExperimentConfig& c, std::uint64_t seed) {
  switch (c.experiment) {
    case Experiment::one_d_grid: return run_grid(c, seed);
    case Experiment::one_d_traj: return run_traj(c, seed);
    case Experiment::rotation: return run_rotation(c, seed);
    case Experiment::reweight: return run_reweight(c, seed);
    case Experiment::scaling: break;
  }
  throw std::invalid_argument("experiment " + to_string(c.experiment) + " is run by the sweep subcommand");
}

}  // namespace

RunOutput run_experiment(const ExperimentConfig& cfg) {
  validate(cfg, false);
  std::vector<std::vector<MetricsRecord>> per_seed(cfg.seeds.size());
  if (cfg.jobs > 1 && cfg.seeds.size() > 1) {
    std::size_t next = 0;
    while (next < cfg.seeds.size()) {
      std::vector<std::pair<std::size_t, std::future<std::vector<MetricsRecord>>>> batch;
      for (int j = 0; j < cfg.jobs && next < cfg.seeds.size(); ++j, ++next)
        batch.emplace_back(next, std::async(std::launch::async, run_seed, std::cref(cfg), cfg.seeds[next]));
      for (auto& [i, f] : batch) per_seed[i] = f.get();
    }
  } else {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) per_seed[i] = run_seed(cfg, cfg.seeds[i]);
  }
  RunOutput out;
  for (auto& v : per_seed)
    for (auto& r : v) out.records.push_back(std::move(r));
  return out;
}

void dump_first_tape(const ExperimentConfig& c, std::ostream& os) {
  const std::uint64_t seed = c.seeds.front();
  Rng rng = Rng(seed).split("dump");
  switch (c.experiment) {
    case Experiment::one_d_grid:
    case Experiment::one_d_traj: {
      const auto p = one_d_perturbation(c, c.k.empty() ? 2 : c.k.front());
      const auto pop = sample_population(problems::one_d::theta_of(rng.normal()), p, rng);
      evograd_hypergrad(pop, problems::one_d::lambda_of(1.0), problems::one_d::loss_fns(), p, &os);
      return;
    }
    case Experiment::rotation: {
      const auto rc = rotation_config(c);
      const auto task = problems::rotation::gen_rotated_digits(rc.n, rc.true_angle, seed, rc.noise);
      Rng init = Rng(seed).split("init");
      const auto theta = problems::init_mlp({problems::rotation::kFeatures, rc.hidden, problems::rotation::kClasses}, init);
      std::vector<std::size_t> idx(std::min(rc.batch, task.train.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      const auto tb = task.train.rows(idx);
      const auto vb = task.val.rows(std::span(idx).first(std::min(idx.size(), task.val.size())));
      HyperParams lam;
      lam.values.add("angle", Tensor::scalar(0.0));
      evograd_hypergrad(sample_population(theta, rc.evo, rng), lam, problems::rotation::rotation_losses(tb, vb),
                        rc.evo, &os);
      return;
    }
    case Experiment::reweight:
    case Experiment::scaling: {
      const auto rc = reweight_config(c);
      const auto task = problems::reweight::gen_noisy_classification(rc.n, rc.classes, rc.rho, seed, rc.shape);
      Rng init = Rng(seed).split("init");
      const auto theta = problems::init_mlp({rc.shape.dim, rc.hidden, rc.classes}, init);
      const auto omega = problems::reweight::init_weightnet(rc.weight_hidden, init);
      std::vector<std::size_t> idx(std::min(rc.batch, task.val.size()));
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      const auto tb = task.train.rows(idx);
      const auto vb = task.val.rows(idx);
      evograd_hypergrad(sample_population(theta, rc.evo, rng), omega, problems::reweight::reweight_losses(tb, vb),
                        rc.evo, &os);
      return;
    }
  }
}

void export_dataset(const ExperimentConfig& c, std::ostream& os) {
  const std::uint64_t seed = c.seeds.front();
  if (c.experiment == Experiment::rotation) {
    const auto rc = rotation_config(c);
    problems::write_dataset_csv(os, problems::rotation::gen_rotated_digits(rc.n, rc.true_angle, seed, rc.noise).train);
  } else if (c.experiment == Experiment::reweight) {
    const auto rc = reweight_config(c);
    problems::write_dataset_csv(
        os, problems::reweight::gen_noisy_classification(rc.n, rc.classes, rc.rho, seed, rc.shape).train);
  } else {
    throw ConfigError({"export_data: only rotation and reweight have datasets"});
  }
}

ReweightConfig sweep_base(SweepDimension dimension) {
  ReweightConfig r;
  r.rho = 0.4;
  r.n = 1000;
  r.classes = 10;
  r.batch = 64;
  r.shape.dim = 32;
  r.shape.n_val = 500;
  r.shape.n_test = 10;
  r.hidden = 128;
  r.weight_hidden = 32;
  r.method = HypergradMethod::evograd;
  // Sweeps time steps, not learning. With thousands of WeightNet units a
  // 1e-2 Adam step saturates every sigmoid within a few steps.
  r.meta_lr = 1e-4;
  if (dimension == SweepDimension::hyperparam_count) {
    r.shape.dim = 4096;
    r.hidden = 256;
    r.batch = 8;
  }
  if (dimension == SweepDimension::population_k) {
    // Wide input, narrow hidden layer, small batch: theta* and its gradient
    // dominate the tape, each extra candidate adds only a batch-sized graph.
    r.shape.dim = 4096;
    r.hidden = 32;
    r.batch = 8;
    r.weight_hidden = 8;
  }
  return r;
}

std::vector<SweepPoint> scaling_sweep(SweepDimension dimension, const std::vector<double>& grid,
                                      const ExperimentConfig& base, std::uint64_t seed) {
  if (grid.empty()) throw ConfigError({"grid: must be non-empty"});
  const std::size_t steps = static_cast<std::size_t>(base.steps.value_or(20));
  std::vector<SweepPoint> out;
  for (double g : grid) {
    ReweightConfig rc = sweep_base(dimension);
    if (base.hidden) rc.hidden = *base.hidden;
    if (base.weight_hidden) rc.weight_hidden = *base.weight_hidden;
    if (base.batch) rc.batch = *base.batch;
    rc.evo = practical_perturbation(base);
    rc.t1t2 = {base.fd_delta, base.inner_lr};
    switch (dimension) {
      case SweepDimension::model_width:
        rc.hidden = static_cast<std::size_t>(std::lround(double(rc.hidden) * g));
        break;
      case SweepDimension::hyperparam_count:
        rc.weight_hidden = static_cast<std::size_t>(std::max(1.0, std::round((g - 1.0) / 3.0)));
        break;
      case SweepDimension::population_k:
        rc.evo.k = static_cast<int>(std::lround(g));
        break;
    }
    rc.evo.validate();
    const CostProblem problem = problems::reweight::cost_problem(rc, seed);
    MetaStepConfig mc;
    mc.order = rc.order;
    mc.evo = rc.evo;
    mc.t1t2 = rc.t1t2;

    SweepPoint p;
    p.dimension = dimension;
    p.grid_value = g;
    p.param_count = problems::MlpSpec{rc.shape.dim, rc.hidden, rc.classes}.param_count();
    p.hyperparam_count = problems::reweight::weightnet_param_count(rc.weight_hidden);
    p.k = rc.evo.k;
    p.evograd = cost_probe(HypergradMethod::evograd, problem, steps, mc, seed);
    if (dimension == SweepDimension::model_width) p.t1t2 = cost_probe(HypergradMethod::t1t2, problem, steps, mc, seed);
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<MetricsRecord> sweep_records(const std::vector<SweepPoint>& points, std::uint64_t seed) {
  std::vector<MetricsRecord> out;
  auto add_report = [&](const SweepPoint& p, std::size_t i, const CostReport& rep) {
    MetricsRecord r;
    r.run_id = "scaling/" + to_string(p.dimension) + "/" + to_string(rep.method);
    r.seed = seed;
    r.step = static_cast<std::int64_t>(i);
    r.wall_ms = rep.median_step_ms;
    r.add("grid_value", p.grid_value);
    r.add("param_count", double(p.param_count));
    r.add("hyperparam_count", double(p.hyperparam_count));
    r.add("k", p.k);
    r.add("node_count", double(rep.node_count));
    r.add("stored_bytes", double(rep.stored_bytes));
    r.add("retained_nodes", double(rep.retained_nodes));
    r.add("retained_bytes", double(rep.retained_bytes));
    r.add("forward_per_step", double(rep.forward_per_step));
    r.add("backward_per_step", double(rep.backward_per_step));
    out.push_back(std::move(r));
  };
  for (std::size_t i = 0; i < points.size(); ++i) {
    add_report(points[i], i, points[i].evograd);
    if (points[i].t1t2) add_report(points[i], i, *points[i].t1t2);
  }
  return out;
}

}  // namespace evograd
