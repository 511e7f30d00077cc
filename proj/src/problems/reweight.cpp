#include "evograd/problems/reweight.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <numeric>

namespace evograd::problems::reweight {

NoisyLabelTask gen_noisy_classification(std::size_t n, std::size_t classes, double rho, std::uint64_t seed,
                                        const TaskShape& shape) {
  if (classes < 2) throw std::invalid_argument("noisy task: classes must be >= 2");
  if (!(rho >= 0.0 && rho <= 0.9)) throw std::invalid_argument("noisy task: rho must be in [0, 0.9]");
  if (n == 0) throw std::invalid_argument("noisy task: n must be >= 1");

  Rng mean_rng(777);
  Tensor means({classes, shape.dim});
  for (auto& v : means.raw()) v = shape.separation * mean_rng.normal();

  const Rng root = Rng(seed).split("data");
  auto sample = [&](std::size_t count, Rng rng) {
    Dataset d;
    d.x = Tensor({count, shape.dim});
    d.y.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      d.y[i] = rng.index(classes);
      for (std::size_t j = 0; j < shape.dim; ++j) d.x.at(i, j) = means.at(d.y[i], j) + rng.normal();
    }
    return d;
  };

  NoisyLabelTask task;
  task.rho = rho;
  task.train = sample(n, root.split("train"));
  task.val = sample(shape.n_val, root.split("val"));
  task.test = sample(shape.n_test, root.split("test"));
  task.clean_labels = task.train.y;
  task.train.corrupted.assign(n, 0);

  Rng noise = root.split("corruption");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), noise.engine());
  const auto count = static_cast<std::size_t>(std::llround(rho * double(n)));
  for (std::size_t r = 0; r < count; ++r) {
    const std::size_t i = order[r];
    const std::size_t offset = 1 + noise.index(classes - 1);
    task.train.y[i] = (task.clean_labels[i] + offset) % classes;
    task.train.corrupted[i] = 1;
  }
  return task;
}

std::size_t weightnet_param_count(std::size_t hidden) { return 3 * hidden + 1; }

HyperParams init_weightnet(std::size_t hidden, Rng& rng) {
  if (hidden == 0) throw std::invalid_argument("weightnet: hidden must be >= 1");
  HyperParams h;
  h.role = HyperRole::network_meta;
  Tensor a1({1, hidden}), a2({hidden, 1});
  for (auto& v : a1.raw()) v = rng.normal();
  for (auto& v : a2.raw()) v = std::sqrt(1.0 / double(hidden)) * rng.normal();
  h.values.add("a1", std::move(a1));
  h.values.add("c1", Tensor({1, hidden}));
  h.values.add("a2", std::move(a2));
  h.values.add("c2", Tensor({1, 1}));
  return h;
}

Var weightnet(Var losses, std::span<const Var> omega) {
  if (omega.size() != 4) throw std::invalid_argument("weightnet: expected 4 segments");
  Var h = relu(add_bias(matmul(losses, omega[0]), omega[1]));
  return sigmoid(add_bias(matmul(h, omega[2]), omega[3]));
}

Tensor weightnet(const HyperParams& omega, const Tensor& losses) {
  Tape t;
  auto om = omega.values.record(t, LeafKind::constant);
  return weightnet(t.constant(losses.reshaped({losses.size(), 1})), om).value();
}

Var weighted_loss(Tape& tape, std::span<const Var> theta, std::span<const Var> omega, const Dataset& batch) {
  const std::size_t n = batch.size();
  Var ce = cross_entropy(mlp_logits(tape.constant(batch.x), theta), batch.y);
  Var v = weightnet(tape.constant(ce.value().reshaped({n, 1})), omega);
  return sum(mul(normalize(reshape(v, {n})), ce));
}

LossFns reweight_losses(const Dataset& train_batch, const Dataset& val_batch) {
  LossFns f;
  f.train = [&train_batch](Tape& t, std::span<const Var> th, std::span<const Var> om) {
    return weighted_loss(t, th, om, train_batch);
  };
  f.val = [&val_batch](Tape& t, std::span<const Var> th, std::span<const Var>) {
    return mean_ce(t, th, val_batch.x, val_batch.y);
  };
  return f;
}

LossFns plain_losses(const Dataset& train_batch, const Dataset& val_batch) {
  LossFns f;
  f.train = [&train_batch](Tape& t, std::span<const Var> th, std::span<const Var>) {
    return mean_ce(t, th, train_batch.x, train_batch.y);
  };
  f.val = [&val_batch](Tape& t, std::span<const Var> th, std::span<const Var>) {
    return mean_ce(t, th, val_batch.x, val_batch.y);
  };
  return f;
}

UnrolledCost unrolled_t1t2(const ParamVector& theta, const HyperParams& omega, const Dataset& train_batch,
                           const Dataset& val_batch, double alpha) {
  Tape t;
  auto th = theta.record(t, LeafKind::parameter);
  auto om = omega.values.record(t, LeafKind::parameter);
  const std::size_t n = train_batch.size();
  const std::size_t classes = th[3].value().cols();

  Var x = t.constant(train_batch.x);
  Var ones_row = t.constant(Tensor({1, n}, 1.0));
  Var z1 = add_bias(matmul(x, th[0]), th[1]);
  Var a1 = relu(z1);
  Var z2 = add_bias(matmul(a1, th[2]), th[3]);
  Var ce = cross_entropy(z2, train_batch.y);
  Var v = weightnet(t.constant(ce.value().reshaped({n, 1})), om);
  Var u = normalize(reshape(v, {n}));

  // d(sum_i u_i ce_i)/dz2 = diag(u) (softmax(z2) - onehot(y))
  Tensor onehot({n, classes});
  for (std::size_t i = 0; i < n; ++i) onehot.at(i, train_batch.y[i]) = 1.0;
  Var weights = matmul(reshape(u, {n, 1}), t.constant(Tensor({1, classes}, 1.0)));
  Var g2 = mul(weights, sub(softmax(z2), t.constant(onehot)));
  Var gw2 = matmul(transpose(a1), g2);
  Var gb2 = matmul(ones_row, g2);
  // relu' is piecewise constant, so its mask carries no gradient.
  Tensor mask(z1.shape());
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = z1.value()[i] > 0.0 ? 1.0 : 0.0;
  Var g1 = mul(matmul(g2, transpose(th[2])), t.constant(mask));
  Var gw1 = matmul(transpose(x), g1);
  Var gb1 = matmul(ones_row, g1);

  const Var grads[] = {gw1, gb1, gw2, gb2};
  std::vector<Var> stepped;
  for (std::size_t s = 0; s < 4; ++s) stepped.push_back(sub(th[s], scalar_mul(grads[s], alpha)));
  Var val = mean_ce(t, stepped, val_batch.x, val_batch.y);

  UnrolledCost out;
  out.grad = flatten(t.backward(val, om));
  out.tape = t.stats();
  return out;
}

namespace {

double lr_at(const ReweightConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int e : cfg.lr_decay_epochs)
    if (epoch >= e) lr *= cfg.lr_decay;
  return lr;
}

MetaState initial_state(const ReweightConfig& cfg, const Rng& root) {
  Rng init = root.split("init");
  MetaState s;
  s.theta = init_mlp({cfg.shape.dim, cfg.hidden, cfg.classes}, init);
  s.lambda = init_weightnet(cfg.weight_hidden, init);
  s.theta_opt = make_optimizer(OptimizerKind::sgd, cfg.lr, cfg.momentum);
  s.lambda_opt = make_optimizer(cfg.meta_optimizer, cfg.meta_lr);
  return s;
}

MetaStepConfig step_config(const ReweightConfig& cfg) {
  MetaStepConfig mc;
  mc.method = cfg.method;
  mc.order = cfg.order;
  mc.evo = cfg.evo;
  mc.t1t2 = cfg.t1t2;
  return mc;
}

}  // namespace

ReweightResult run_reweight_experiment(const ReweightConfig& cfg, std::uint64_t seed) {
  if (cfg.method == HypergradMethod::oracle) throw std::invalid_argument("reweight: no oracle hypergradient");
  const NoisyLabelTask task = gen_noisy_classification(cfg.n, cfg.classes, cfg.rho, seed, cfg.shape);
  const Rng root(seed);
  Rng batches = root.split("batches"), population = root.split("population");
  MetaState state = initial_state(cfg, root);
  const MetaStepConfig mc = step_config(cfg);
  const bool meta = cfg.method != HypergradMethod::none;

  ReweightResult res;
  bool first = true;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    state.theta_opt->set_learning_rate(lr_at(cfg, epoch));
    for (const auto& idx : epoch_batches(task.train.size(), cfg.batch, batches)) {
      const Dataset tb = task.train.rows(idx);
      const Dataset vb = task.val.rows(sample_indices(task.val.size(), cfg.batch, batches));
      const LossFns fns = meta ? reweight_losses(tb, vb) : plain_losses(tb, vb);
      auto r = meta_step(state, fns, mc, population);
      if (meta && first) {
        res.initial_hypergrad_norm = norm(r.hypergrad);
        if (res.initial_hypergrad_norm == 0.0)
          throw WiringError("reweight: hypergradient is exactly zero at initialisation");
      }
      first = false;
      r.record.run_id = cfg.run_id;
      r.record.seed = seed;
      res.records.push_back(std::move(r.record));
    }
    res.records.back().accuracy = accuracy(state.theta, task.test);
  }

  res.test_accuracy = accuracy(state.theta, task.test);
  // Raw weight-net outputs on the full training set at the final parameters.
  Tape t;
  auto th = state.theta.record(t, LeafKind::constant);
  Var ce = cross_entropy(mlp_logits(t.constant(task.train.x), th), task.train.y);
  const Tensor w = weightnet(state.lambda, ce.value());
  double clean = 0.0, noisy = 0.0;
  std::size_t n_clean = 0, n_noisy = 0;
  for (std::size_t i = 0; i < task.train.size(); ++i) {
    if (task.train.corrupted[i]) {
      noisy += w[i];
      ++n_noisy;
    } else {
      clean += w[i];
      ++n_clean;
    }
  }
  res.mean_weight_clean = n_clean ? clean / double(n_clean) : std::nan("");
  res.mean_weight_noisy = n_noisy ? noisy / double(n_noisy) : std::nan("");
  auto& last = res.records.back();
  if (meta) {
    last.add("mean_weight_clean", res.mean_weight_clean);
    if (n_noisy) last.add("mean_weight_noisy", res.mean_weight_noisy);
  }
  return res;
}

CostProblem cost_problem(const ReweightConfig& cfg, std::uint64_t seed) {
  auto task = std::make_shared<NoisyLabelTask>(gen_noisy_classification(cfg.n, cfg.classes, cfg.rho, seed, cfg.shape));
  // Batches are fixed per step index so every method sees the same data.
  // A deque keeps earlier batches at stable addresses while later ones are added.
  auto train_batches = std::make_shared<std::deque<Dataset>>();
  auto val_batches = std::make_shared<std::deque<Dataset>>();
  auto batch_rng = std::make_shared<Rng>(Rng(seed).split("batches"));

  auto batch_for = [=](std::size_t step) {
    while (train_batches->size() <= step) {
      train_batches->push_back(task->train.rows(sample_indices(task->train.size(), cfg.batch, *batch_rng)));
      val_batches->push_back(task->val.rows(sample_indices(task->val.size(), cfg.batch, *batch_rng)));
    }
    return std::make_pair(&(*train_batches)[step], &(*val_batches)[step]);
  };

  CostProblem p;
  p.init = [cfg, seed] { return initial_state(cfg, Rng(seed)); };
  p.losses = [batch_for](std::size_t step) {
    auto [tb, vb] = batch_for(step);
    return reweight_losses(*tb, *vb);
  };
  p.unrolled_t1t2 = [batch_for, alpha = cfg.lr](const ParamVector& theta, const HyperParams& omega,
                                                  std::size_t step) {
    auto [tb, vb] = batch_for(step);
    return unrolled_t1t2(theta, omega, *tb, *vb, alpha);
  };
  return p;
}

}  // namespace evograd::problems::reweight
