#include "evograd/problems/rotation.hpp"

#include <cmath>
#include <numbers>

namespace evograd::problems::rotation {

namespace {

constexpr double kClassSpacing = 60.0;

std::vector<Tensor> glyph_templates() {
  Rng rng(12345);
  Tensor base({kPoints, 2});
  for (auto& v : base.raw()) v = rng.uniform(-1.0, 1.0);
  std::vector<Tensor> out;
  for (std::size_t c = 0; c < kClasses; ++c)
    out.push_back(rotate_points(base.reshaped({1, kFeatures}), radians(kClassSpacing * double(c))));
  return out;
}

Dataset sample_glyphs(std::size_t n, double angle_deg, double noise, Rng& rng) {
  static const std::vector<Tensor> templates = glyph_templates();
  Dataset d;
  d.x = Tensor({n, kFeatures});
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = rng.index(kClasses);
    const double s = rng.uniform(0.9, 1.1);
    d.y[i] = c;
    for (std::size_t j = 0; j < kFeatures; ++j) d.x.at(i, j) = s * templates[c][j] + noise * rng.normal();
  }
  if (angle_deg != 0.0) d.x = rotate_points(d.x, radians(angle_deg));
  return d;
}

}  // namespace

double degrees(double r) { return r * 180.0 / std::numbers::pi; }
double radians(double d) { return d * std::numbers::pi / 180.0; }

Tensor rotate_points(const Tensor& x, double rad) {
  Tape t;
  return rotate2d(t.constant(x), t.constant(Tensor::scalar(rad))).value();
}

RotationTask gen_rotated_digits(std::size_t n, double true_angle_deg, std::uint64_t seed, double noise) {
  if (n < 100) throw std::invalid_argument("rotation task: n must be >= 100");
  const Rng root = Rng(seed).split("data");
  RotationTask task;
  task.true_angle = true_angle_deg;
  Rng r_train = root.split("train"), r_val = root.split("val"), r_test = root.split("test");
  task.train = sample_glyphs(n, 0.0, noise, r_train);
  task.val = sample_glyphs(n / 5, true_angle_deg, noise, r_val);
  task.test_canonical = sample_glyphs(2000, 0.0, noise, r_test);
  task.test = task.test_canonical;
  task.test.x = rotate_points(task.test_canonical.x, radians(true_angle_deg));
  return task;
}

LossFns rotation_losses(const Dataset& train_batch, const Dataset& val_batch) {
  LossFns f;
  f.train = [&train_batch](Tape& t, std::span<const Var> th, std::span<const Var> lam) {
    Var x = rotate2d(t.constant(train_batch.x), lam[0]);
    return mean(cross_entropy(mlp_logits(x, th), train_batch.y));
  };
  f.val = [&val_batch](Tape& t, std::span<const Var> th, std::span<const Var>) {
    return mean_ce(t, th, val_batch.x, val_batch.y);
  };
  return f;
}

RotationResult run_rotation_experiment(const RotationConfig& cfg, std::uint64_t seed) {
  const RotationTask task = gen_rotated_digits(cfg.n, cfg.true_angle, seed, cfg.noise);
  const Rng root(seed);
  Rng init = root.split("init"), batches = root.split("batches"), population = root.split("population");

  MetaState state;
  state.theta = init_mlp({kFeatures, cfg.hidden, kClasses}, init);
  state.lambda.values.add("angle", Tensor::scalar(0.0));
  state.lambda.role = HyperRole::scalar_meta;
  state.theta_opt = make_optimizer(OptimizerKind::adam, cfg.lr);
  state.lambda_opt = make_optimizer(OptimizerKind::adam, cfg.meta_lr);

  MetaStepConfig mc;
  mc.method = cfg.method;
  mc.order = cfg.order;
  mc.evo = cfg.evo;
  mc.t1t2 = cfg.t1t2;

  RotationResult res;
  const bool meta = cfg.method != HypergradMethod::none;
  bool first = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& idx : epoch_batches(task.train.size(), cfg.batch, batches)) {
      const Dataset tb = task.train.rows(idx);
      const Dataset vb = task.val.rows(sample_indices(task.val.size(), cfg.batch, batches));
      const LossFns fns = rotation_losses(tb, vb);
      auto r = meta_step(state, fns, mc, population);
      if (meta && first) {
        res.initial_hypergrad = r.hypergrad[0];
        if (r.hypergrad[0] == 0.0) throw WiringError("rotation: hypergradient is exactly zero at initialisation");
      }
      first = false;
      r.record.run_id = cfg.run_id;
      r.record.seed = seed;
      if (meta) r.record.add("angle_deg", degrees(state.lambda.values[0].value[0]));
      res.records.push_back(std::move(r.record));
    }
    res.records.back().accuracy = accuracy(state.theta, task.test);
  }
  res.final_angle = degrees(state.lambda.values[0].value[0]);
  res.test_accuracy = accuracy(state.theta, task.test);
  res.same_orientation_accuracy = accuracy(state.theta, task.test_canonical);
  return res;
}

}  // namespace evograd::problems::rotation
