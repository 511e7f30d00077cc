#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

#include "doctest.h"
#include "evograd/problems/mlp.hpp"
#include "evograd/problems/reweight.hpp"
#include "evograd/problems/rotation.hpp"
#include "fd_check.hpp"

using namespace evograd;
using namespace evograd::problems;

TEST_CASE("noisy classification is a pure function of its arguments") {
  const auto a = reweight::gen_noisy_classification(300, 3, 0.2, 7);
  const auto b = reweight::gen_noisy_classification(300, 3, 0.2, 7);
  const auto c = reweight::gen_noisy_classification(300, 3, 0.2, 8);
  CHECK(a.train.x.raw() == b.train.x.raw());
  CHECK(a.train.y == b.train.y);
  CHECK(a.train.corrupted == b.train.corrupted);
  CHECK(a.val.x.raw() == b.val.x.raw());
  CHECK(a.train.x.raw() != c.train.x.raw());
}

TEST_CASE("corruption count and labels") {
  for (double rho : {0.0, 0.2, 0.4}) {
    for (std::size_t classes : {2, 4}) {
      const auto t = reweight::gen_noisy_classification(1000, classes, rho, 3);
      const auto flagged = std::accumulate(t.train.corrupted.begin(), t.train.corrupted.end(), std::size_t{0});
      CHECK(std::abs(double(flagged) - rho * 1000.0) <= 1.0);
      for (std::size_t i = 0; i < t.train.size(); ++i) {
        if (t.train.corrupted[i]) {
          CHECK(t.train.y[i] != t.clean_labels[i]);
        } else {
          CHECK(t.train.y[i] == t.clean_labels[i]);
        }
        CHECK(t.train.y[i] < classes);
      }
    }
  }
}

TEST_CASE("noise rate outside [0, 0.9] is rejected") {
  CHECK_THROWS(reweight::gen_noisy_classification(100, 2, 0.95, 0));
  CHECK_THROWS(reweight::gen_noisy_classification(100, 2, -0.1, 0));
}

TEST_CASE("rotated digits: sizes, determinism and exact test rotation") {
  const auto a = rotation::gen_rotated_digits(500, 30.0, 4);
  const auto b = rotation::gen_rotated_digits(500, 30.0, 4);
  CHECK(a.train.size() == 500);
  CHECK(a.val.size() == 100);
  CHECK(a.test.size() == 2000);
  CHECK(a.train.x.cols() == rotation::kFeatures);
  CHECK(a.train.x.raw() == b.train.x.raw());
  CHECK(a.test.y == a.test_canonical.y);
  const Tensor turned = rotation::rotate_points(a.test_canonical.x, rotation::radians(30.0));
  CHECK(max_abs_diff(turned, a.test.x) == 0.0);
  std::set<std::size_t> labels(a.train.y.begin(), a.train.y.end());
  CHECK(labels.size() == rotation::kClasses);
  CHECK_THROWS(rotation::gen_rotated_digits(50, 30.0, 0));
}

TEST_CASE("rotations compose and zero is the identity") {
  Rng rng(1);
  const Tensor x = testing::random_tensor(rng, {5, rotation::kFeatures});
  CHECK(max_abs_diff(rotation::rotate_points(x, 0.0), x) == 0.0);
  for (auto [a, b] : {std::pair{0.3, -1.1}, std::pair{2.0, 2.5}, std::pair{-0.7, 0.7}}) {
    const Tensor ab = rotation::rotate_points(rotation::rotate_points(x, a), b);
    CHECK(max_abs_diff(ab, rotation::rotate_points(x, a + b)) < 1e-9);
  }
  Tape t;
  Var p = t.constant(x);
  Var once = rotate2d(rotate2d(p, t.constant(Tensor::scalar(0.4))), t.constant(Tensor::scalar(0.5)));
  CHECK(max_abs_diff(once.value(), rotation::rotate_points(x, 0.9)) < 1e-9);
  CHECK(rotation::degrees(rotation::radians(30.0)) == doctest::Approx(30.0));
}

TEST_CASE("weight network outputs lie strictly inside (0, 1)") {
  Rng rng(2);
  const auto omega = reweight::init_weightnet(32, rng);
  CHECK(omega.role == HyperRole::network_meta);
  CHECK(omega.dim() == reweight::weightnet_param_count(32));
  Tensor losses({200});
  for (std::size_t i = 0; i < losses.size(); ++i) losses[i] = rng.uniform(0.0, 8.0);
  const Tensor w = reweight::weightnet(omega, losses);
  CHECK(w.size() == 200);
  for (double v : w.raw()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("a constant weight network reduces the weighted loss to the mean loss") {
  const auto task = reweight::gen_noisy_classification(64, 3, 0.4, 1);
  Rng rng(1);
  const auto theta = init_mlp({task.train.x.cols(), 8, 3}, rng);
  for (double c2 : {0.0, 40.0}) {
    auto omega = reweight::init_weightnet(4, rng);
    for (std::size_t i = 0; i < omega.values[2].value.size(); ++i) omega.values[2].value[i] = 0.0;
    omega.values[3].value[0] = c2;
    Tape t;
    auto th = theta.record(t, LeafKind::constant);
    auto om = omega.values.record(t, LeafKind::constant);
    const double weighted = reweight::weighted_loss(t, th, om, task.train).value()[0];
    const double plain = mean_ce(t, th, task.train.x, task.train.y).value()[0];
    CHECK(weighted == doctest::Approx(plain).epsilon(1e-12));
  }
}

TEST_CASE("mlp layout and helpers") {
  const MlpSpec spec{5, 7, 3};
  Rng rng(0);
  const auto p = init_mlp(spec, rng);
  CHECK(p.total_dim() == spec.param_count());
  CHECK(p[0].value.shape() == Shape{5, 7});
  CHECK(p[1].value.shape() == Shape{1, 7});
  CHECK(p[3].value.shape() == Shape{1, 3});

  const auto batches = epoch_batches(103, 20, rng);
  CHECK(batches.size() == 6);
  std::vector<std::size_t> all;
  for (const auto& b : batches) all.insert(all.end(), b.begin(), b.end());
  std::sort(all.begin(), all.end());
  std::vector<std::size_t> expected(103);
  std::iota(expected.begin(), expected.end(), 0);
  CHECK(all == expected);

  const Tensor logits = Tensor::matrix(3, 2, {1, 0, 0, 1, 2, 1});
  const std::size_t y[] = {0, 0, 0};
  CHECK(accuracy(logits, y) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("dataset export writes a header and one row per instance") {
  const auto t = reweight::gen_noisy_classification(10, 2, 0.2, 0, {3, 1.5, 5, 5});
  std::ostringstream os;
  write_dataset_csv(os, t.train);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  CHECK(line == "f0,f1,f2,label,corrupted");
  int rows = 0;
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 10);
}

TEST_CASE("hyperparameters receive gradient at initialisation") {
  rotation::RotationConfig rc;
  rc.n = 300;
  rc.epochs = 1;
  const auto r = rotation::run_rotation_experiment(rc, 0);
  CHECK(r.initial_hypergrad != 0.0);

  reweight::ReweightConfig wc;
  wc.n = 200;
  wc.epochs = 1;
  wc.shape.n_test = 50;
  const auto w = reweight::run_reweight_experiment(wc, 0);
  CHECK(w.initial_hypergrad_norm > 0.0);
}

TEST_CASE("no rotation to learn keeps the angle near zero") {
  rotation::RotationConfig rc;
  rc.true_angle = 0.0;
  const auto r = rotation::run_rotation_experiment(rc, 1);
  CHECK(std::abs(r.final_angle) < 5.0);
  CHECK(std::abs(r.test_accuracy - r.same_orientation_accuracy) < 0.02);
}

TEST_CASE("rotation baseline loses accuracy on the turned test set") {
  rotation::RotationConfig rc;
  rc.method = HypergradMethod::none;
  const auto r = rotation::run_rotation_experiment(rc, 0);
  CHECK(r.same_orientation_accuracy - r.test_accuracy > 0.05);
}
