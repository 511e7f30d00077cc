#include "evograd/problems/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "evograd/csv.hpp"

namespace evograd::problems {

Dataset Dataset::rows(std::span<const std::size_t> index) const {
  Dataset out;
  const std::size_t f = x.cols();
  out.x = Tensor({index.size(), f});
  out.y.reserve(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    const std::size_t i = index[r];
    if (i >= size()) throw std::out_of_range("dataset: row " + std::to_string(i) + " out of range");
    std::copy_n(x.raw().begin() + static_cast<std::ptrdiff_t>(i * f), f,
                out.x.raw().begin() + static_cast<std::ptrdiff_t>(r * f));
    out.y.push_back(y[i]);
    if (!corrupted.empty()) out.corrupted.push_back(corrupted[i]);
  }
  return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& d) {
  const std::size_t f = d.x.cols();
  for (std::size_t j = 0; j < f; ++j) os << 'f' << j << ',';
  os << "label,corrupted\n";
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = 0; j < f; ++j) os << format_double(d.x.at(i, j)) << ',';
    os << d.y[i] << ',' << (d.corrupted.empty() ? 0 : int(d.corrupted[i])) << '\n';
  }
}

ParamVector init_mlp(const MlpSpec& spec, Rng& rng) {
  if (spec.in == 0 || spec.hidden == 0 || spec.out == 0) throw std::invalid_argument("mlp: zero-sized layer");
  auto gaussian = [&](std::size_t r, std::size_t c, double s) {
    Tensor t({r, c});
    for (auto& v : t.raw()) v = s * rng.normal();
    return t;
  };
  ParamVector p;
  p.add("w1", gaussian(spec.in, spec.hidden, std::sqrt(2.0 / double(spec.in))));
  p.add("b1", Tensor({1, spec.hidden}));
  p.add("w2", gaussian(spec.hidden, spec.out, std::sqrt(1.0 / double(spec.hidden))));
  p.add("b2", Tensor({1, spec.out}));
  return p;
}

Var add_bias(Var z, Var b) {
  Tape& t = *z.tape;
  Var ones = t.constant(Tensor({z.value().rows(), 1}, 1.0));
  return add(z, matmul(ones, b));
}

Var mlp_logits(Var x, std::span<const Var> p) {
  if (p.size() != 4) throw std::invalid_argument("mlp: expected 4 parameter segments, got " + std::to_string(p.size()));
  Var h = relu(add_bias(matmul(x, p[0]), p[1]));
  return add_bias(matmul(h, p[2]), p[3]);
}

Tensor mlp_logits(const ParamVector& theta, const Tensor& x) {
  Tape tape;
  auto p = theta.record(tape, LeafKind::constant);
  return mlp_logits(tape.constant(x), p).value();
}

double accuracy(const Tensor& logits, std::span<const std::size_t> y) {
  if (logits.rows() != y.size()) throw std::invalid_argument("accuracy: label count mismatch");
  if (y.empty()) return 0.0;
  std::size_t hit = 0;
  const std::size_t c = logits.cols();
  for (std::size_t i = 0; i < y.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits.at(i, j) > logits.at(i, best)) best = j;
    hit += best == y[i];
  }
  return double(hit) / double(y.size());
}

double accuracy(const ParamVector& theta, const Dataset& d) { return accuracy(mlp_logits(theta, d.x), d.y); }

Var mean_ce(Tape& tape, std::span<const Var> theta, const Tensor& x, std::span<const std::size_t> y) {
  return mean(cross_entropy(mlp_logits(tape.constant(x), theta), y));
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch, Rng& rng) {
  if (batch == 0) throw std::invalid_argument("batch size must be >= 1");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng.engine());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch)
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(i),
                     perm.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch)));
  return out;
}

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<std::size_t> out(count);
  for (auto& i : out) i = rng.index(n);
  return out;
}

}  // namespace evograd::problems
