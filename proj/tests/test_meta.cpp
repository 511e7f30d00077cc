#include <cmath>

#include "doctest.h"
#include "evograd/cost.hpp"
#include "evograd/meta.hpp"
#include "evograd/baselines.hpp"
#include "evograd/problems/one_d.hpp"
#include "evograd/problems/reweight.hpp"

using namespace evograd;
namespace one_d = evograd::problems::one_d;

namespace {

MetaState one_d_state(double x, double lambda, double lr = 0.1, double meta_lr = 0.1) {
  MetaState s;
  s.theta = one_d::theta_of(x);
  s.lambda = one_d::lambda_of(lambda);
  s.theta_opt = std::make_unique<Sgd>(lr);
  s.lambda_opt = std::make_unique<Sgd>(meta_lr);
  return s;
}

OracleFn one_d_oracle() {
  return [](const ParamVector&, const HyperParams& l) {
    return Tensor::scalar(oracle_hypergrad_1d(l.values[0].value[0]));
  };
}

problems::reweight::ReweightConfig tiny_reweight() {
  problems::reweight::ReweightConfig c;
  c.n = 200;
  c.classes = 3;
  c.hidden = 8;
  c.weight_hidden = 4;
  c.batch = 16;
  c.shape.dim = 5;
  c.shape.n_val = 50;
  c.shape.n_test = 10;
  return c;
}

}  // namespace

TEST_CASE("method and order names round trip") {
  for (auto m : {HypergradMethod::evograd, HypergradMethod::evograd_factorized, HypergradMethod::t1t2,
                 HypergradMethod::oracle, HypergradMethod::none})
    CHECK(parse_hypergrad_method(to_string(m)) == m);
  CHECK(to_string(HypergradMethod::none) == "baseline-no-meta");
  for (auto o : {UpdateOrder::theta_first, UpdateOrder::lambda_first}) CHECK(parse_update_order(to_string(o)) == o);
  CHECK_THROWS(parse_hypergrad_method("second-order"));
}

TEST_CASE("without a hypergradient the step is plain SGD on theta") {
  const auto fns = one_d::loss_fns();
  MetaState meta = one_d_state(2.0, 0.7);
  MetaState plain = one_d_state(2.0, 0.7);
  MetaStepConfig cfg;
  cfg.method = HypergradMethod::none;
  Rng rng(0);
  for (int i = 0; i < 5; ++i) {
    const auto r = meta_step(meta, fns, cfg, rng);
    CHECK(r.hypergrad.size() == 0);
    CHECK_FALSE(r.record.lambda.has_value());
    base_step(plain, fns);
    CHECK(meta.theta[0].value[0] == plain.theta[0].value[0]);
  }
  CHECK(meta.lambda.values[0].value[0] == 0.7);
  // SGD on (x-1)^2 + 0.7 x^2 by hand.
  double x = 2.0;
  for (int i = 0; i < 5; ++i) x -= 0.1 * (2 * (x - 1) + 2 * 0.7 * x);
  CHECK(meta.theta[0].value[0] == doctest::Approx(x).epsilon(1e-14));
}

TEST_CASE("a zero hypergradient reduces to plain SGD") {
  const auto fns = one_d::loss_fns();
  MetaState meta = one_d_state(-1.0, 0.5);
  MetaState plain = one_d_state(-1.0, 0.5);
  MetaStepConfig cfg;
  cfg.method = HypergradMethod::oracle;
  cfg.oracle = [](const ParamVector&, const HyperParams&) { return Tensor::scalar(0.0); };
  Rng rng(0);
  for (int i = 0; i < 5; ++i) {
    meta_step(meta, fns, cfg, rng);
    base_step(plain, fns);
  }
  CHECK(meta.theta[0].value[0] == plain.theta[0].value[0]);
  CHECK(meta.lambda.values[0].value[0] == 0.5);
}

TEST_CASE("oracle stepping from (2, 2) follows the hand recurrence") {
  one_d::TrajectoryConfig cfg;
  Rng rng(0);
  const auto pts = one_d::trajectory(cfg, HypergradMethod::oracle, one_d::default_perturbation(2), rng);
  REQUIRE(pts.size() == 6);
  double x = 2.0, l = 2.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    x -= 0.1 * (2 * (x - 1) + 2 * l * x);
    l -= 0.1 * oracle_hypergrad_1d(l);
    CHECK(pts[i].x == doctest::Approx(x).epsilon(1e-12));
    CHECK(pts[i].lambda == doctest::Approx(l).epsilon(1e-12));
  }
  // x heads for 1/(1+lambda) ~ 1/3 and passes the validation minimum at 0.5
  // on the way, so f_V falls for three steps and then rises again.
  for (std::size_t i = 1; i <= 3; ++i) CHECK(pts[i].f_val < pts[i - 1].f_val);
  CHECK(pts[4].f_val > pts[3].f_val);
  CHECK(pts.back().f_val < pts.front().f_val);
}

TEST_CASE("update order decides which theta the hypergradient sees") {
  const auto fns = one_d::loss_fns();
  for (auto order : {UpdateOrder::theta_first, UpdateOrder::lambda_first}) {
    MetaState s = one_d_state(2.0, 1.0);
    double seen = 0.0;
    MetaStepConfig cfg;
    cfg.method = HypergradMethod::oracle;
    cfg.order = order;
    cfg.oracle = [&](const ParamVector& th, const HyperParams&) {
      seen = th[0].value[0];
      return Tensor::scalar(0.0);
    };
    Rng rng(0);
    meta_step(s, fns, cfg, rng);
    if (order == UpdateOrder::lambda_first) {
      CHECK(seen == 2.0);
    } else {
      CHECK(seen == doctest::Approx(2.0 - 0.1 * (2 * 1.0 + 2 * 2.0)));
    }
  }
}

TEST_CASE("meta step records cost and hyperparameter fields") {
  const auto fns = one_d::loss_fns();
  MetaState s = one_d_state(0.3, 1.5);
  MetaStepConfig cfg;
  cfg.evo = one_d::default_perturbation(2);
  Rng rng(1);
  const auto r = meta_step(s, fns, cfg, rng);
  CHECK(r.record.has_cost);
  CHECK(r.record.forward_count == 4);
  CHECK(r.record.backward_count == 2);
  REQUIRE(r.record.lambda.has_value());
  CHECK(*r.record.lambda == s.lambda.values[0].value[0]);
  REQUIRE(r.record.hypergrad_norm.has_value());
  CHECK(*r.record.hypergrad_norm == doctest::Approx(std::abs(r.hypergrad[0])));
  CHECK(r.record.wall_ms.has_value());
  CHECK(s.step == 1);
}

TEST_CASE("pass counts per meta step") {
  const auto fns = one_d::loss_fns();
  struct Case {
    HypergradMethod method;
    int k;
    std::int64_t fwd, bwd;
  };
  for (const auto& c : {Case{HypergradMethod::evograd, 2, 4, 2}, Case{HypergradMethod::evograd, 5, 7, 2},
                        Case{HypergradMethod::evograd_factorized, 2, 4, 4}, Case{HypergradMethod::t1t2, 2, 4, 4},
                        Case{HypergradMethod::none, 2, 1, 1}}) {
    MetaState s = one_d_state(0.3, 1.5);
    MetaStepConfig cfg;
    cfg.method = c.method;
    cfg.evo = one_d::default_perturbation(c.k);
    Rng rng(0);
    const auto r = meta_step(s, fns, cfg, rng);
    CHECK(r.passes.forward == c.fwd);
    CHECK(r.passes.backward == c.bwd);
  }
}

TEST_CASE("cost probe counts are seed independent") {
  const auto rc = tiny_reweight();
  MetaStepConfig mc;
  mc.order = rc.order;
  for (auto method : {HypergradMethod::evograd, HypergradMethod::t1t2}) {
    const auto a = cost_probe(method, problems::reweight::cost_problem(rc, 1), 3, mc, 1);
    const auto b = cost_probe(method, problems::reweight::cost_problem(rc, 9), 3, mc, 9);
    CHECK(a.node_count == b.node_count);
    CHECK(a.stored_bytes == b.stored_bytes);
    CHECK(a.retained_bytes == b.retained_bytes);
    CHECK(a.forward_per_step == b.forward_per_step);
    CHECK(a.backward_per_step == b.backward_per_step);
  }
}

TEST_CASE("cost probe reports structural counts for both methods") {
  const auto rc = tiny_reweight();
  MetaStepConfig mc;
  const auto problem = problems::reweight::cost_problem(rc, 0);
  const auto evo = cost_probe(HypergradMethod::evograd, problem, 2, mc, 0);
  const auto t12 = cost_probe(HypergradMethod::t1t2, problem, 2, mc, 0);
  CHECK(evo.forward_per_step == 4);
  CHECK(evo.backward_per_step == 2);
  CHECK(evo.retained_bytes == evo.stored_bytes);
  CHECK(t12.forward_per_step == 4);
  CHECK(t12.backward_per_step == 4);
  CHECK(evo.stored_bytes < t12.retained_bytes);
  CHECK_THROWS(cost_probe(HypergradMethod::evograd, problem, 0, mc, 0));
}

TEST_CASE("median") {
  CHECK(median({}) == 0.0);
  CHECK(median({3.0}) == 3.0);
  CHECK(median({5.0, 1.0, 3.0}) == 3.0);
  CHECK(median({4.0, 1.0, 3.0, 2.0}) == 2.5);
}
