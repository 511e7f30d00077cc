#include "evograd/tape.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace evograd {

namespace {

[[noreturn]] void shape_error(std::string_view op, const std::string& detail) {
  throw std::invalid_argument(std::string(op) + ": " + detail);
}

void require_same(std::string_view op, const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    shape_error(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tape& tape_of(std::string_view op, const Var& v) {
  if (v.tape == nullptr) shape_error(op, "input is not attached to a tape");
  v.tape->check(v, op);
  return *v.tape;
}

Tape& common_tape(std::string_view op, std::span<const Var> vs) {
  Tape& t = tape_of(op, vs.front());
  for (const auto& v : vs.subspan(1)) {
    if (v.tape != &t) shape_error(op, "inputs live on different tapes");
    t.check(v, op);
  }
  return t;
}

// Row-wise softmax over the last axis.
Tensor softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t r = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * c;
    double* out = y.data().data() + i * c;
    const double m = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[j] = std::exp(in[j] - m));
    for (std::size_t j = 0; j < c; ++j) out[j] /= z;
  }
  return y;
}

Tensor log_softmax_rows(const Tensor& x) {
  Tensor y(x.shape());
  const std::size_t r = x.rows(), c = x.cols();
  for (std::size_t i = 0; i < r; ++i) {
    const double* in = x.data().data() + i * c;
    double* out = y.data().data() + i * c;
    const double m = *std::max_element(in, in + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(in[j] - m);
    const double lz = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[j] = in[j] - lz;
  }
  return y;
}

void matmul_into(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p];
      out[i] = s;
    }
    return;
  }
  std::fill(out, out + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
}

Tensor matmul_values(const Tensor& a, const Tensor& b) {
  Tensor out({a.shape()[0], b.shape()[1]});
  matmul_into(a.data().data(), b.data().data(), out.data().data(), a.shape()[0], a.shape()[1], b.shape()[1]);
  return out;
}

// g (m,n) times b^T for b (k,n): rows of g against rows of b.
Tensor matmul_bt(const Tensor& g, const Tensor& b) {
  const std::size_t m = g.shape()[0], n = g.shape()[1], k = b.shape()[0];
  Tensor out({m, k});
  const double* gd = g.data().data();
  const double* bd = b.data().data();
  double* o = out.data().data();
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) o[i * k + p] = gd[i] * bd[p];
    return out;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += gd[i * n + j] * bd[p * n + j];
      o[i * k + p] = s;
    }
  return out;
}

// a^T (k,m) times g (m,n) for a (m,k).
Tensor matmul_at(const Tensor& a, const Tensor& g) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = g.shape()[1];
  Tensor out({k, n});
  const double* ad = a.data().data();
  const double* gd = g.data().data();
  double* o = out.data().data();
  if (n == 1) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) o[p] += ad[i * k + p] * gd[i];
    return out;
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      double* row = o + p * n;
      const double* grow = gd + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * grow[j];
    }
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scalar_mul: return "scalar_mul";
    case Op::scale: return "scale";
    case Op::matmul: return "matmul";
    case Op::transpose: return "transpose";
    case Op::reshape: return "reshape";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::softmax: return "softmax";
    case Op::log_softmax: return "log_softmax";
    case Op::cross_entropy: return "cross_entropy";
    case Op::mse: return "mse";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::affine_combine: return "affine_combine";
    case Op::rotate2d: return "rotate2d";
    case Op::stack: return "stack";
    case Op::normalize: return "normalize";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (tape == nullptr) throw std::logic_error("var: not attached to a tape");
  tape->check(*this, "value");
  return tape->node(id).value;
}

bool Var::requires_grad() const {
  tape->check(*this, "requires_grad");
  return tape->node(id).requires_grad;
}

void Tape::check(const Var& v, std::string_view op) const {
  if (v.tape != this || v.generation != generation_ || v.id >= nodes_.size())
    shape_error(op, "input var does not live on this tape");
}

Var Tape::leaf(Tensor value, LeafKind kind) {
  Node n;
  n.id = static_cast<std::uint32_t>(nodes_.size());
  n.op = Op::leaf;
  n.leaf_kind = kind;
  n.requires_grad = kind == LeafKind::parameter;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.back().id, generation_};
}

Var Tape::record(Op op, std::span<const Var> inputs, Tensor value, double factor,
                 std::vector<std::size_t> targets) {
  Node n;
  n.id = static_cast<std::uint32_t>(nodes_.size());
  n.op = op;
  n.parents.reserve(inputs.size());
  for (const auto& v : inputs) {
    check(v, op_name(op));
    n.parents.push_back(v.id);
    n.requires_grad = n.requires_grad || nodes_[v.id].requires_grad;
  }
  n.value = std::move(value);
  n.factor = factor;
  n.targets = std::move(targets);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.back().id, generation_};
}

TapeStats Tape::stats() const {
  TapeStats s;
  for (const auto& n : nodes_) {
    const std::size_t bytes = n.value.size() * sizeof(double);
    if (n.op == Op::leaf) {
      ++s.leaf_count;
      s.leaf_bytes += bytes;
    } else if (n.requires_grad) {
      ++s.node_count;
      s.stored_bytes += bytes;
    }
  }
  s.backward_sweeps = sweeps_;
  return s;
}

std::size_t Tape::count_op(Op op) const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [op](const Node& n) { return n.op == op; }));
}

std::size_t Tape::count_leaves(LeafKind kind) const {
  return static_cast<std::size_t>(std::count_if(
      nodes_.begin(), nodes_.end(), [kind](const Node& n) { return n.op == Op::leaf && n.leaf_kind == kind; }));
}

void Tape::reset() {
  nodes_.clear();
  ++generation_;
  sweeps_ = 0;
}

bool Tape::depends_on(Var root, Var leaf) const {
  check(root, "depends_on");
  check(leaf, "depends_on");
  if (leaf.id > root.id) return false;
  std::vector<bool> reached(root.id + 1, false);
  reached[root.id] = true;
  for (std::uint32_t id = root.id + 1; id-- > leaf.id;) {
    if (!reached[id]) continue;
    if (id == leaf.id) return true;
    for (auto p : nodes_[id].parents) reached[p] = true;
  }
  return false;
}

void Tape::dump(std::ostream& os) const {
  for (const auto& n : nodes_) {
    os << n.id << ' ' << op_name(n.op) << ' ';
    if (n.parents.empty()) {
      os << '-';
    } else {
      for (std::size_t i = 0; i < n.parents.size(); ++i) os << (i ? "," : "") << n.parents[i];
    }
    os << ' ' << shape_str(n.value.shape()) << '\n';
  }
}

std::vector<Tensor> Tape::backward(Var root, std::span<const Var> wrt) {
  check(root, "backward");
  for (const auto& v : wrt) check(v, "backward");
  if (!nodes_[root.id].value.is_scalar())
    shape_error("backward", "root must be scalar, got shape " + shape_str(nodes_[root.id].value.shape()));
  ++sweeps_;

  std::vector<Tensor> grads(root.id + 1);
  auto accumulate = [&](std::uint32_t id, Tensor g) {
    if (!nodes_[id].requires_grad) return;
    if (grads[id].size() == 0) {
      grads[id] = std::move(g);
    } else {
      grads[id] += g;
    }
  };
  if (nodes_[root.id].requires_grad) grads[root.id] = Tensor(nodes_[root.id].value.shape(), 1.0);

  for (std::int64_t idx = root.id; idx >= 0; --idx) {
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (n.op == Op::leaf || grads[n.id].size() == 0) continue;
    const Tensor& g = grads[n.id];
    const auto& p = n.parents;
    auto val = [&](std::size_t i) -> const Tensor& { return nodes_[p[i]].value; };

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::add:
        accumulate(p[0], g);
        accumulate(p[1], g);
        break;
      case Op::sub:
        accumulate(p[0], g);
        accumulate(p[1], -1.0 * g);
        break;
      case Op::mul: {
        Tensor ga(g.shape()), gb(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          ga[i] = g[i] * val(1)[i];
          gb[i] = g[i] * val(0)[i];
        }
        accumulate(p[0], ga);
        accumulate(p[1], gb);
        break;
      }
      case Op::scalar_mul:
        accumulate(p[0], n.factor * g);
        break;
      case Op::scale: {
        const double s = val(0)[0];
        accumulate(p[0], Tensor::scalar(dot(g, val(1))));
        accumulate(p[1], s * g);
        break;
      }
      case Op::matmul: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        if (nodes_[p[0]].requires_grad) accumulate(p[0], matmul_bt(g, b));
        if (nodes_[p[1]].requires_grad) accumulate(p[1], matmul_at(a, g));
        break;
      }
      case Op::transpose:
        accumulate(p[0], g.transposed());
        break;
      case Op::reshape:
        accumulate(p[0], g.reshaped(nodes_[p[0]].value.shape()));
        break;
      case Op::relu: {
        Tensor ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] = val(0)[i] > 0.0 ? g[i] : 0.0;
        accumulate(p[0], ga);
        break;
      }
      case Op::sigmoid: {
        Tensor ga(g.shape());
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double y = n.value[i];
          ga[i] = g[i] * y * (1.0 - y);
        }
        accumulate(p[0], ga);
        break;
      }
      case Op::softmax: {
        const Tensor& y = n.value;
        Tensor ga(g.shape());
        const std::size_t r = y.rows(), c = y.cols();
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += g[i * c + j] * y[i * c + j];
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] = y[i * c + j] * (g[i * c + j] - s);
        }
        accumulate(p[0], ga);
        break;
      }
      case Op::log_softmax: {
        const Tensor& y = n.value;
        Tensor ga(g.shape());
        const std::size_t r = y.rows(), c = y.cols();
        for (std::size_t i = 0; i < r; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < c; ++j) s += g[i * c + j];
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] = g[i * c + j] - std::exp(y[i * c + j]) * s;
        }
        accumulate(p[0], ga);
        break;
      }
      case Op::cross_entropy: {
        const Tensor& logits = val(0);
        Tensor probs = softmax_rows(logits);
        const std::size_t r = logits.rows(), c = logits.cols();
        for (std::size_t i = 0; i < r; ++i) {
          probs[i * c + n.targets[i]] -= 1.0;
          for (std::size_t j = 0; j < c; ++j) probs[i * c + j] *= g[i];
        }
        accumulate(p[0], probs);
        break;
      }
      case Op::mse: {
        const Tensor& a = val(0);
        const Tensor& b = val(1);
        const double k = 2.0 * g[0] / static_cast<double>(a.size());
        Tensor ga(a.shape());
        for (std::size_t i = 0; i < a.size(); ++i) ga[i] = k * (a[i] - b[i]);
        accumulate(p[0], ga);
        accumulate(p[1], -1.0 * ga);
        break;
      }
      case Op::sum:
        accumulate(p[0], Tensor(val(0).shape(), g[0]));
        break;
      case Op::mean:
        accumulate(p[0], Tensor(val(0).shape(), g[0] / static_cast<double>(val(0).size())));
        break;
      case Op::affine_combine: {
        const Tensor& w = val(0);
        Tensor gw(w.shape());
        for (std::size_t k = 0; k + 1 < p.size(); ++k) {
          gw[k] = dot(g, val(k + 1));
          if (nodes_[p[k + 1]].requires_grad) accumulate(p[k + 1], w[k] * g);
        }
        accumulate(p[0], gw);
        break;
      }
      case Op::rotate2d: {
        const double angle = val(1)[0];
        const double cs = std::cos(angle), sn = std::sin(angle);
        const Tensor& out = n.value;
        Tensor gp(g.shape());
        double ga = 0.0;
        for (std::size_t i = 0; i + 1 < g.size(); i += 2) {
          const double gx = g[i], gy = g[i + 1];
          gp[i] = cs * gx + sn * gy;
          gp[i + 1] = -sn * gx + cs * gy;
          ga += -gx * out[i + 1] + gy * out[i];
        }
        accumulate(p[0], gp);
        accumulate(p[1], Tensor::scalar(ga));
        break;
      }
      case Op::stack:
        for (std::size_t k = 0; k < p.size(); ++k) accumulate(p[k], Tensor::scalar(g[k]));
        break;
      case Op::normalize: {
        const Tensor& y = n.value;
        const Tensor& x = val(0);
        double total = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) total += x[i];
        const double s = dot(g, y);
        Tensor ga(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) ga[i] = (g[i] - s) / total;
        accumulate(p[0], ga);
        break;
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const auto& v : wrt) {
    if (v.id <= root.id && grads[v.id].size() != 0) {
      out.push_back(grads[v.id]);
    } else {
      out.emplace_back(nodes_[v.id].value.shape(), 0.0);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Forward operators

Var add(Var a, Var b) {
  const Var in[] = {a, b};
  Tape& t = common_tape("add", in);
  require_same("add", a, b);
  Tensor v = a.value();
  v += b.value();
  return t.record(Op::add, in, std::move(v));
}

Var sub(Var a, Var b) {
  const Var in[] = {a, b};
  Tape& t = common_tape("sub", in);
  require_same("sub", a, b);
  return t.record(Op::sub, in, a.value() - b.value());
}

Var mul(Var a, Var b) {
  const Var in[] = {a, b};
  Tape& t = common_tape("mul", in);
  require_same("mul", a, b);
  Tensor v = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  return t.record(Op::mul, in, std::move(v));
}

Var scalar_mul(Var a, double factor) {
  const Var in[] = {a};
  Tape& t = common_tape("scalar_mul", in);
  return t.record(Op::scalar_mul, in, factor * a.value(), factor);
}

Var scale(Var s, Var x) {
  const Var in[] = {s, x};
  Tape& t = common_tape("scale", in);
  if (!s.value().is_scalar()) shape_error("scale", "factor must have one element, got " + shape_str(s.shape()));
  return t.record(Op::scale, in, s.value()[0] * x.value());
}

Var matmul(Var a, Var b) {
  const Var in[] = {a, b};
  Tape& t = common_tape("matmul", in);
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
    shape_error("matmul", "cannot multiply " + shape_str(sa) + " by " + shape_str(sb));
  return t.record(Op::matmul, in, matmul_values(a.value(), b.value()));
}

Var reshape(Var a, Shape shape) {
  const Var in[] = {a};
  Tape& t = common_tape("reshape", in);
  if (numel(shape) != a.value().size())
    shape_error("reshape", "cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  return t.record(Op::reshape, in, a.value().reshaped(std::move(shape)));
}

Var transpose(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("transpose", in);
  if (a.shape().size() != 2) shape_error("transpose", "needs a matrix, got " + shape_str(a.shape()));
  return t.record(Op::transpose, in, a.value().transposed());
}

Var relu(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("relu", in);
  Tensor v = a.value();
  for (auto& x : v.raw()) x = x > 0.0 ? x : 0.0;
  return t.record(Op::relu, in, std::move(v));
}

Var sigmoid(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("sigmoid", in);
  Tensor v = a.value();
  for (auto& x : v.raw()) x = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  return t.record(Op::sigmoid, in, std::move(v));
}

Var softmax(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("softmax", in);
  if (a.value().size() == 0) shape_error("softmax", "empty input");
  return t.record(Op::softmax, in, softmax_rows(a.value()));
}

Var log_softmax(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("log_softmax", in);
  if (a.value().size() == 0) shape_error("log_softmax", "empty input");
  return t.record(Op::log_softmax, in, log_softmax_rows(a.value()));
}

Var cross_entropy(Var logits, std::span<const std::size_t> targets) {
  const Var in[] = {logits};
  Tape& t = common_tape("cross_entropy", in);
  const Tensor& z = logits.value();
  if (z.rank() != 1 && z.rank() != 2) shape_error("cross_entropy", "logits must be rank 1 or 2");
  const std::size_t r = z.rows(), c = z.cols();
  if (targets.size() != r)
    shape_error("cross_entropy", std::to_string(targets.size()) + " targets for " + std::to_string(r) + " rows");
  for (std::size_t i = 0; i < r; ++i)
    if (targets[i] >= c)
      shape_error("cross_entropy", "target " + std::to_string(targets[i]) + " out of range for " +
                                       std::to_string(c) + " classes");
  const Tensor lp = log_softmax_rows(z);
  Tensor v({r});
  for (std::size_t i = 0; i < r; ++i) v[i] = -lp[i * c + targets[i]];
  return t.record(Op::cross_entropy, in, std::move(v), 0.0, {targets.begin(), targets.end()});
}

Var mse(Var a, Var b) {
  const Var in[] = {a, b};
  Tape& t = common_tape("mse", in);
  require_same("mse", a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
  return t.record(Op::mse, in, Tensor::scalar(s / static_cast<double>(av.size())));
}

Var sum(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("sum", in);
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return t.record(Op::sum, in, Tensor::scalar(s));
}

Var mean(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("mean", in);
  if (a.value().size() == 0) shape_error("mean", "empty input");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  return t.record(Op::mean, in, Tensor::scalar(s / static_cast<double>(a.value().size())));
}

Var affine_combine(Var weights, std::span<const Var> items) {
  if (items.empty()) shape_error("affine_combine", "no items");
  std::vector<Var> in;
  in.reserve(items.size() + 1);
  in.push_back(weights);
  in.insert(in.end(), items.begin(), items.end());
  Tape& t = common_tape("affine_combine", in);
  const Tensor& w = weights.value();
  if (w.rank() != 1 || w.size() != items.size())
    shape_error("affine_combine", std::to_string(w.size()) + " weights for " + std::to_string(items.size()) + " items");
  Tensor v(items.front().shape());
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (items[k].shape() != v.shape())
      shape_error("affine_combine", "item shape " + shape_str(items[k].shape()) + " vs " + shape_str(v.shape()));
    const Tensor& x = items[k].value();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += w[k] * x[i];
  }
  return t.record(Op::affine_combine, in, std::move(v));
}

Var rotate2d(Var points, Var angle) {
  const Var in[] = {points, angle};
  Tape& t = common_tape("rotate2d", in);
  const Tensor& p = points.value();
  if (p.rank() != 2 || p.cols() % 2 != 0)
    shape_error("rotate2d", "points must be (n, 2m), got " + shape_str(p.shape()));
  if (!angle.value().is_scalar()) shape_error("rotate2d", "angle must have one element");
  const double a = angle.value()[0];
  const double cs = std::cos(a), sn = std::sin(a);
  Tensor v(p.shape());
  for (std::size_t i = 0; i + 1 < p.size(); i += 2) {
    v[i] = cs * p[i] - sn * p[i + 1];
    v[i + 1] = sn * p[i] + cs * p[i + 1];
  }
  return t.record(Op::rotate2d, in, std::move(v));
}

Var stack(std::span<const Var> scalars) {
  if (scalars.empty()) shape_error("stack", "no inputs");
  Tape& t = common_tape("stack", scalars);
  Tensor v({scalars.size()});
  for (std::size_t k = 0; k < scalars.size(); ++k) {
    if (!scalars[k].value().is_scalar()) shape_error("stack", "input " + std::to_string(k) + " is not scalar");
    v[k] = scalars[k].value()[0];
  }
  return t.record(Op::stack, scalars, std::move(v));
}

Var normalize(Var a) {
  const Var in[] = {a};
  Tape& t = common_tape("normalize", in);
  const Tensor& x = a.value();
  if (x.rank() != 1) shape_error("normalize", "needs a vector, got " + shape_str(x.shape()));
  double s = 0.0;
  for (double v : x.data()) s += v;
  if (!(s > 0.0)) shape_error("normalize", "sum must be positive");
  return t.record(Op::normalize, in, (1.0 / s) * x);
}

}  // namespace evograd
