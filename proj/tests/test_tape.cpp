#include <cmath>
#include <sstream>

#include "doctest.h"
#include "evograd/tape.hpp"
#include "fd_check.hpp"
#include "op_cases.hpp"

using namespace evograd;
using evograd::testing::fd_check;
using evograd::testing::random_tensor;

namespace {

constexpr double kTol = 1e-5;

}  // namespace

TEST_CASE("fresh tape has no nodes") {
  Tape t;
  CHECK(t.stats().node_count == 0);
  CHECK(t.stats().stored_bytes == 0);
}

TEST_CASE("add records one node and counts its bytes") {
  Tape t;
  Var a = t.parameter(Tensor::vector({1.0, 2.0}));
  Var b = t.parameter(Tensor::vector({3.0, 4.0}));
  const auto before = t.size();
  Var c = add(a, b);
  CHECK(t.size() == before + 1);
  CHECK(c.shape() == Shape{2});
  CHECK(c.value()[1] == 6.0);
  CHECK(t.stats().node_count == 1);
  CHECK(t.stats().stored_bytes == 16);
  CHECK(t.stats().leaf_count == 2);
}

TEST_CASE("constant-only arithmetic is not counted") {
  Tape t;
  Var a = t.constant(Tensor::vector({1.0, 2.0}));
  add(a, a);
  CHECK(t.stats().node_count == 0);
}

TEST_CASE("matmul shape algebra") {
  Tape t;
  Var a = t.parameter(Tensor({2, 3}, 1.0));
  Var b = t.parameter(Tensor({3, 4}, 1.0));
  CHECK(matmul(a, b).shape() == Shape{2, 4});
  Var bad = t.parameter(Tensor({2, 4}, 1.0));
  CHECK_THROWS_WITH_AS(matmul(a, bad), doctest::Contains("matmul"), std::invalid_argument);
}

TEST_CASE("shape mismatch names the operator") {
  Tape t;
  Var a = t.parameter(Tensor::vector({1.0, 2.0}));
  Var b = t.parameter(Tensor::vector({1.0, 2.0, 3.0}));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(mse(a, b), doctest::Contains("mse"), std::invalid_argument);
}

TEST_CASE("vars from another tape are rejected") {
  Tape t1, t2;
  Var a = t1.parameter(Tensor::scalar(1.0));
  Var b = t2.parameter(Tensor::scalar(1.0));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
}

TEST_CASE("vars are invalid after reset") {
  Tape t;
  Var a = t.parameter(Tensor::scalar(1.0));
  t.reset();
  Var b = t.parameter(Tensor::scalar(1.0));
  CHECK_THROWS(add(a, b));
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape t;
  Var y = softmax(t.constant(Tensor::vector({0.0, 0.0})));
  CHECK(y.value()[0] == doctest::Approx(0.5));
  CHECK(y.value()[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax sums to one and stays positive") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    Var y = softmax(t.constant(random_tensor(rng, {7}, -50.0, 50.0)));
    double s = 0.0;
    for (double v : y.value().raw()) {
      CHECK(v > 0.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  Tape t;
  Var big = softmax(t.constant(Tensor::vector({1e4, 0.0, -1e4})));
  CHECK(big.value().all_finite());
}

TEST_CASE("rotate2d by zero is identity") {
  Tape t;
  Rng rng(1);
  Tensor p = random_tensor(rng, {5, 6});
  Var r = rotate2d(t.constant(p), t.constant(Tensor::scalar(0.0)));
  CHECK(max_abs_diff(r.value(), p) == 0.0);
}

TEST_CASE("rotate2d quarter turn") {
  Tape t;
  Var r = rotate2d(t.constant(Tensor::matrix(1, 2, {1.0, 0.0})), t.constant(Tensor::scalar(M_PI / 2)));
  CHECK(r.value()[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.value()[1] == doctest::Approx(1.0));
}

TEST_CASE("saturated cross entropy is near zero") {
  Tape t;
  std::vector<std::size_t> target{0};
  Var l = cross_entropy(t.constant(Tensor::vector({1000.0, -1000.0})), target);
  CHECK(l.value()[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cross entropy rejects out-of-range targets") {
  Tape t;
  std::vector<std::size_t> target{3};
  CHECK_THROWS_WITH_AS(cross_entropy(t.constant(Tensor::matrix(1, 3, {0, 0, 0})), target),
                       doctest::Contains("cross_entropy"), std::invalid_argument);
}

TEST_CASE("backward of x squared") {
  Tape t;
  Var x = t.parameter(Tensor::scalar(3.0));
  std::vector<Var> wrt{x};
  auto g = t.backward(mul(x, x), wrt);
  CHECK(g[0][0] == 6.0);
}

TEST_CASE("backward rejects a non-scalar root") {
  Tape t;
  Var x = t.parameter(Tensor::vector({1.0, 2.0}));
  std::vector<Var> wrt{x};
  CHECK_THROWS_AS(t.backward(x, wrt), std::invalid_argument);
}

TEST_CASE("backward leaves the tape unchanged") {
  Tape t;
  Var x = t.parameter(Tensor::vector({1.0, 2.0}));
  Var y = sum(mul(x, x));
  const auto n = t.size();
  std::vector<Var> wrt{x};
  t.backward(y, wrt);
  CHECK(t.size() == n);
}

TEST_CASE("unreached vars get zero gradient") {
  Tape t;
  Var x = t.parameter(Tensor::vector({1.0, 2.0}));
  Var z = t.parameter(Tensor::vector({5.0, 5.0}));
  std::vector<Var> wrt{x, z};
  auto g = t.backward(sum(x), wrt);
  CHECK(g[1][0] == 0.0);
  CHECK(g[1][1] == 0.0);
}

TEST_CASE("mse of a small linear map matches finite differences") {
  Tensor w = Tensor::matrix(2, 3, {0.5, -1.0, 0.25, 1.5, 0.0, -0.75});
  Tensor x = Tensor::matrix(3, 1, {1.0, 2.0, -1.0});
  Tensor y = Tensor::matrix(2, 1, {0.3, -0.2});
  auto rep = fd_check([&](Tape& t, const std::vector<Var>& v) { return mse(matmul(v[0], v[1]), t.constant(y)); },
                      {w, x});
  CHECK(rep.worst_rel < 1e-6);
}

TEST_CASE("softmax cross entropy gradient is softmax minus onehot") {
  Tensor logits = Tensor::vector({0.2, -1.3, 0.7});
  std::vector<std::size_t> target{2};
  Tape t;
  Var z = t.parameter(logits);
  std::vector<Var> wrt{z};
  auto g = t.backward(sum(cross_entropy(z, target)), wrt);
  Var p = softmax(t.constant(logits));
  for (std::size_t i = 0; i < 3; ++i) CHECK(g[0][i] == doctest::Approx(p.value()[i] - (i == 2 ? 1.0 : 0.0)).epsilon(1e-12));
}

TEST_CASE("every operator matches central finite differences") {
  Rng rng(20240601);
  for (const auto& c : evograd::testing::operator_cases(rng)) {
    CAPTURE(c.name);
    CHECK(fd_check(c.build, c.inputs).worst_rel < kTol);
  }
}

TEST_CASE("parents precede their node") {
  Tape t;
  Var x = t.parameter(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  Var y = sum(relu(matmul(x, transpose(x))));
  (void)y;
  for (std::uint32_t i = 0; i < t.size(); ++i)
    for (auto p : t.node(i).parents) CHECK(p < i);
}

TEST_CASE("identical operation sequences give bit-identical gradients") {
  auto run = [] {
    Rng rng(99);
    Tape t;
    Var w = t.parameter(random_tensor(rng, {4, 3}));
    Var x = t.constant(random_tensor(rng, {5, 4}));
    std::vector<std::size_t> y{0, 1, 2, 1, 0};
    Var loss = mean(cross_entropy(relu(matmul(x, w)), y));
    std::vector<Var> wrt{w};
    return std::make_pair(loss.value()[0], t.backward(loss, wrt)[0]);
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second.raw() == b.second.raw());
}

TEST_CASE("dump writes one line per node") {
  Tape t;
  Var a = t.parameter(Tensor::vector({1.0, 2.0}));
  Var b = t.constant(Tensor::vector({1.0, 2.0}));
  add(a, b);
  std::ostringstream os;
  t.dump(os);
  CHECK(os.str() == "0 leaf - 2\n1 leaf - 2\n2 add 0,1 2\n");
}

TEST_CASE("depends_on follows parent links") {
  Tape t;
  Var a = t.parameter(Tensor::scalar(1.0));
  Var b = t.parameter(Tensor::scalar(2.0));
  Var c = mul(a, a);
  Var d = add(c, t.constant(Tensor::scalar(3.0)));
  CHECK(t.depends_on(d, a));
  CHECK_FALSE(t.depends_on(d, b));
  CHECK(t.depends_on(a, a));
  CHECK_FALSE(t.depends_on(a, d));
}
