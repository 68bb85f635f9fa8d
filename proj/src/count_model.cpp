#include "fsru/count_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsru {

namespace {

struct StepKernel {
  std::vector<double> hire;
  std::vector<double> free;
};

// Pushes one step of mass through the policy. `mass` holds the states of step
// t (states_per_step entries); occupancy cells of step t are written into
// `cells` when non-null, and next-step mass is added to `next`.
void propagate_step(const AugmentedSpace& space, const FsruInstance& instance,
                    const Policy& policy, int t, const std::vector<double>& mass,
                    const StepKernel& kernel, double* cells,
                    std::vector<double>& next) {
  const std::size_t per_step = space.states_per_step();
  const std::size_t base = static_cast<std::size_t>(t) * per_step;
  const int z = space.num_zones();
  const Action sink_action = space.sink_action();
  const bool last = t + 1 >= space.horizon();
  for (std::size_t local = 0; local < per_step; ++local) {
    const double m = mass[local];
    if (m == 0.0) continue;
    const std::size_t state = base + local;
    const auto u = space.decode(state).second;
    const auto row = policy.row(state);
    double* out = cells ? cells + local * static_cast<std::size_t>(space.num_actions())
                        : nullptr;
    auto next_slot = [&](const AugmentedState& v) {
      return space.state_index(0, v);
    };
    if (u.location == space.sink()) {
      for (Action a = 0; a <= z; ++a) {
        const double x = m * row[static_cast<std::size_t>(a)];
        if (x == 0.0) continue;
        if (out) out[a] = x;
        if (!last) next[next_slot(space.after(u, a, a))] += x;
      }
      continue;
    }
    const auto s = static_cast<std::size_t>(u.location);
    double active = 0.0;
    for (Action a = 0; a < z; ++a) {
      const double x = m * row[static_cast<std::size_t>(a)];
      if (x == 0.0) continue;
      if (out) out[a] = x;
      active += x;
      if (!last && kernel.free[s] != 0.0) {
        next[next_slot({a, u.hours_served + 1, u.breaks_taken})] += x * kernel.free[s];
      }
    }
    if (active != 0.0 && !last) {
      const double hired = active * kernel.hire[s];
      for (Location j = 0; j < z; ++j) {
        const double f = instance.flow_at(t, u.location, j);
        if (f == 0.0) continue;
        next[next_slot({j, u.hours_served + 1, u.breaks_taken})] += hired * f;
      }
    }
    const double x = m * row[static_cast<std::size_t>(sink_action)];
    if (x != 0.0) {
      if (out) out[sink_action] = x;
      if (!last) next[next_slot(space.after(u, sink_action, space.sink()))] += x;
    }
  }
}

void check_policy(const Policy& policy, const FsruInstance& instance) {
  const auto& space = policy.space();
  if (space.num_zones() != instance.num_zones || space.horizon() != instance.horizon ||
      space.max_hours() != instance.max_hours ||
      space.max_breaks() != instance.max_breaks) {
    throw std::invalid_argument("policy shape does not match instance");
  }
}

}  // namespace

double CountPmf::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < probs.size(); ++k) {
    m += probs[k] * static_cast<double>(offset + static_cast<int>(k));
  }
  return m;
}

CountPmf binomial_pmf(int trials, double p, double tail_mass) {
  if (trials < 0) throw std::invalid_argument("binomial trials must be non-negative");
  CountPmf pmf;
  if (trials == 0 || p <= 0.0) {
    pmf.offset = 0;
    pmf.probs = {1.0};
    return pmf;
  }
  if (p >= 1.0) {
    pmf.offset = trials;
    pmf.probs = {1.0};
    return pmf;
  }
  const double n = trials;
  const int mode = std::min(trials, static_cast<int>(std::floor((n + 1.0) * p)));
  auto log_pmf = [&](int i) {
    return std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) +
           i * std::log(p) + (n - i) * std::log1p(-p);
  };
  const double ratio = p / (1.0 - p);
  // Grow [lo, hi] from the mode, always taking the heavier neighbour.
  std::vector<double> left;   // lo-1, lo-2, ...
  std::vector<double> right;  // hi+1, hi+2, ...
  const double at_mode = std::exp(log_pmf(mode));
  double mass = at_mode;
  int lo = mode;
  int hi = mode;
  double p_lo = at_mode;
  double p_hi = at_mode;
  while (mass < 1.0 - tail_mass && (lo > 0 || hi < trials)) {
    // pmf(i-1) = pmf(i) * i / (n - i + 1) / ratio ; pmf(i+1) = pmf(i) * (n - i) / (i + 1) * ratio
    const double cand_lo = lo > 0 ? p_lo * lo / (n - lo + 1.0) / ratio : -1.0;
    const double cand_hi = hi < trials ? p_hi * (n - hi) / (hi + 1.0) * ratio : -1.0;
    if (cand_lo <= 0.0 && cand_hi <= 0.0) break;
    if (cand_hi >= cand_lo) {
      ++hi;
      p_hi = cand_hi;
      right.push_back(cand_hi);
      mass += cand_hi;
    } else {
      --lo;
      p_lo = cand_lo;
      left.push_back(cand_lo);
      mass += cand_lo;
    }
  }
  pmf.offset = lo;
  pmf.probs.reserve(left.size() + right.size() + 1);
  for (auto it = left.rbegin(); it != left.rend(); ++it) pmf.probs.push_back(*it);
  pmf.probs.push_back(at_mode);
  pmf.probs.insert(pmf.probs.end(), right.begin(), right.end());
  for (auto& v : pmf.probs) v /= mass;
  return pmf;
}

CountModel agent_count_probability(const Policy& policy, const FsruInstance& instance,
                                   int others) {
  check_policy(policy, instance);
  if (others < 0) throw std::invalid_argument("others must be non-negative");
  const auto& space = policy.space();
  const int z = instance.num_zones;
  CountModel counts;
  counts.others = others;
  counts.horizon = instance.horizon;
  counts.num_zones = z;
  counts.presence.assign(static_cast<std::size_t>(instance.horizon * z), 0.0);
  counts.pmfs.resize(counts.presence.size());

  const std::size_t per_step = space.states_per_step();
  std::vector<double> mass(per_step, 0.0);
  std::vector<double> next(per_step, 0.0);
  mass[space.state_index(0, {space.sink(), 0, 0})] = 1.0;
  StepKernel kernel{std::vector<double>(static_cast<std::size_t>(z)),
                    std::vector<double>(static_cast<std::size_t>(z))};
  const auto per_zone = per_step / static_cast<std::size_t>(space.num_locations());
  for (int t = 0; t < instance.horizon; ++t) {
    for (Location s = 0; s < z; ++s) {
      double q = 0.0;
      const std::size_t first = static_cast<std::size_t>(s) * per_zone;
      for (std::size_t k = first; k < first + per_zone; ++k) q += mass[k];
      q = std::clamp(q, 0.0, 1.0);
      const std::size_t slot = static_cast<std::size_t>(t * z + s);
      counts.presence[slot] = q;
      counts.pmfs[slot] = binomial_pmf(others, q);
      const auto k = congestion_kernel(instance.demand(t, s), others * q + 1.0);
      kernel.hire[static_cast<std::size_t>(s)] = k.hire_scale;
      kernel.free[static_cast<std::size_t>(s)] = k.free_prob;
    }
    std::fill(next.begin(), next.end(), 0.0);
    propagate_step(space, instance, policy, t, mass, kernel, nullptr, next);
    mass.swap(next);
  }
  return counts;
}

ExpectedKernel expected_kernel(const CountModel& counts, const FsruInstance& instance) {
  ExpectedKernel k;
  k.horizon = counts.horizon;
  k.num_zones = counts.num_zones;
  k.hire.assign(counts.pmfs.size(), 0.0);
  k.free.assign(counts.pmfs.size(), 0.0);
  for (int t = 0; t < counts.horizon; ++t) {
    for (Location s = 0; s < counts.num_zones; ++s) {
      const double demand = instance.demand(t, s);
      const auto& pmf = counts.at(t, s);
      double hire = 0.0;
      double free = 0.0;
      for (std::size_t j = 0; j < pmf.probs.size(); ++j) {
        const double d = pmf.offset + static_cast<int>(j) + 1.0;
        const auto ck = congestion_kernel(demand, d);
        hire += pmf.probs[j] * ck.hire_scale;
        free += pmf.probs[j] * ck.free_prob;
      }
      k.hire[k.slot(t, s)] = hire;
      k.free[k.slot(t, s)] = free;
    }
  }
  return k;
}

SingleAgentModel::SingleAgentModel(const FsruInstance& instance, ExpectedKernel kernel)
    : instance_(&instance), kernel_(std::move(kernel)) {
  if (kernel_.horizon != instance.horizon || kernel_.num_zones != instance.num_zones) {
    throw std::invalid_argument("kernel shape does not match instance");
  }
  hired_margin_.assign(kernel_.hire.size(), 0.0);
  for (int t = 0; t < instance.horizon; ++t) {
    for (Location s = 0; s < instance.num_zones; ++s) {
      double g = 0.0;
      for (Location j = 0; j < instance.num_zones; ++j) {
        g += instance.flow_at(t, s, j) *
             (instance.fare_at(t, s, j) - instance.cost_at(t, s, j));
      }
      hired_margin_[kernel_.slot(t, s)] = g;
    }
  }
}

double SingleAgentModel::reward(int t, Location s, Action a) const {
  const FsruInstance& inst = *instance_;
  if (a == inst.sink_action()) return inst.cost_at(t, s, inst.sink());
  if (inst.is_sink(s)) return inst.cost_at(t, inst.sink(), a);
  const std::size_t slot = kernel_.slot(t, s);
  return kernel_.hire[slot] * hired_margin_[slot] -
         kernel_.free[slot] * inst.cost_at(t, s, a);
}

OccupancyMatrix policy_occupancy(const Policy& policy, const SingleAgentModel& model) {
  const FsruInstance& instance = model.instance();
  check_policy(policy, instance);
  const auto& space = policy.space();
  OccupancyMatrix occ(space);
  const std::size_t per_step = space.states_per_step();
  std::vector<double> mass(per_step, 0.0);
  std::vector<double> next(per_step, 0.0);
  mass[space.state_index(0, {space.sink(), 0, 0})] = 1.0;
  const auto z = static_cast<std::size_t>(instance.num_zones);
  StepKernel kernel{std::vector<double>(z), std::vector<double>(z)};
  for (int t = 0; t < instance.horizon; ++t) {
    for (Location s = 0; s < instance.num_zones; ++s) {
      kernel.hire[static_cast<std::size_t>(s)] = model.kernel().hire_at(t, s);
      kernel.free[static_cast<std::size_t>(s)] = model.kernel().free_at(t, s);
    }
    std::fill(next.begin(), next.end(), 0.0);
    double* cells = occ.values().data() + static_cast<std::size_t>(t) * per_step *
                                              static_cast<std::size_t>(space.num_actions());
    propagate_step(space, instance, policy, t, mass, kernel, cells, next);
    mass.swap(next);
  }
  return occ;
}

double occupancy_value(const OccupancyMatrix& occupancy, const SingleAgentModel& model) {
  const auto& space = occupancy.space();
  double total = 0.0;
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    const auto [t, u] = space.decode(s);
    const auto row = occupancy.row(s);
    for (Action a = 0; a < space.num_actions(); ++a) {
      const double x = row[static_cast<std::size_t>(a)];
      if (x != 0.0) total += x * model.reward(t, u.location, a);
    }
  }
  return total;
}

double policy_value(const Policy& policy, const SingleAgentModel& model) {
  return occupancy_value(policy_occupancy(policy, model), model);
}

}  // namespace fsru
