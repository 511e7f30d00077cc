#include "evograd/cost.hpp"

#include <algorithm>
#include <stdexcept>

namespace evograd {

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

CostReport cost_probe(HypergradMethod method, const CostProblem& problem, std::size_t steps,
                      const MetaStepConfig& cfg, std::uint64_t seed) {
  if (steps == 0) throw std::invalid_argument("cost probe: steps must be >= 1");
  MetaStepConfig c = cfg;
  c.method = method;
  MetaState state = problem.init();
  Rng rng = Rng(seed).split("population");

  CostReport rep;
  rep.method = method;
  rep.steps = steps;
  std::vector<double> ms;
  for (std::size_t s = 0; s < steps; ++s) {
    const LossFns fns = problem.losses(s);
    if (method == HypergradMethod::t1t2 && problem.unrolled_t1t2) {
      const auto u = problem.unrolled_t1t2(state.theta, state.lambda, s);
      rep.retained_bytes = std::max(rep.retained_bytes, u.tape.stored_bytes);
      rep.retained_nodes = std::max(rep.retained_nodes, u.tape.node_count);
    }
    const auto r = meta_step(state, fns, c, rng);
    ms.push_back(*r.record.wall_ms);
    rep.node_count = std::max(rep.node_count, r.peak.node_count);
    rep.stored_bytes = std::max(rep.stored_bytes, r.peak.stored_bytes);
    if (s > 0 && (r.passes.forward != rep.forward_per_step || r.passes.backward != rep.backward_per_step))
      throw std::logic_error("cost probe: pass counts changed between steps");
    rep.forward_per_step = r.passes.forward;
    rep.backward_per_step = r.passes.backward;
  }
  if (!(method == HypergradMethod::t1t2 && problem.unrolled_t1t2)) {
    rep.retained_bytes = rep.stored_bytes;
    rep.retained_nodes = rep.node_count;
  }
  rep.median_step_ms = median(ms);
  return rep;
}

}  // namespace evograd
