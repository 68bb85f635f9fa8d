#include "fsru/model.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace fsru {

namespace {

void check_query(const FsruInstance& instance, int t, Location s, Action a) {
  if (t < 0 || t >= instance.horizon) {
    throw std::out_of_range("time step out of range");
  }
  if (s < 0 || s > instance.num_zones) {
    throw std::out_of_range("location out of range");
  }
  if (a < 0 || a > instance.num_zones) {
    throw std::out_of_range("action out of range");
  }
}

double congestion_input(const FsruInstance& instance, Location s,
                        const StateDistribution& d) {
  if (d.counts.size() != static_cast<std::size_t>(instance.num_locations())) {
    throw std::invalid_argument("state distribution has wrong length");
  }
  return instance.is_sink(s) ? 0.0 : d.active(s);
}

std::string cell_name(int t, Location from, Location to) {
  std::ostringstream out;
  out << "(t=" << t << ", s=" << from << ", s'=" << to << ")";
  return out.str();
}

}  // namespace

FsruInstance FsruInstance::zeros(int num_zones, int horizon, int num_agents,
                                 int max_hours, int max_breaks) {
  FsruInstance inst;
  inst.num_zones = num_zones;
  inst.horizon = horizon;
  inst.num_agents = num_agents;
  inst.max_hours = max_hours;
  inst.max_breaks = max_breaks;
  const auto l = static_cast<std::size_t>(num_zones + 1);
  const std::size_t n = static_cast<std::size_t>(std::max(horizon, 0)) * l * l;
  inst.flow.assign(n, 0.0);
  inst.fare.assign(n, 0.0);
  inst.cost.assign(n, 0.0);
  return inst;
}

double FsruInstance::demand(int t, Location s) const {
  double total = 0.0;
  for (Location j = 0; j < num_zones; ++j) total += flow_at(t, s, j);
  return total;
}

FsruInstance example_instance(int horizon, int num_agents, int max_hours,
                              int max_breaks) {
  auto inst = FsruInstance::zeros(3, horizon, num_agents,
                                  max_hours < 0 ? horizon : max_hours,
                                  max_breaks);
  for (int t = 0; t < horizon; ++t) {
    for (Location i = 0; i < 3; ++i) {
      for (Location j = 0; j < 3; ++j) {
        inst.fare[inst.index(t, i, j)] = 1.0;
        if (i != j) inst.flow[inst.index(t, i, j)] = 1.0;
      }
    }
  }
  return inst;
}

CongestionKernel congestion_kernel(double demand, double active_count) {
  if (!(active_count > 0.0)) {
    throw std::domain_error("transition queried from a zone with no active agents");
  }
  CongestionKernel k;
  if (demand >= active_count) {
    k.hire_scale = 1.0 / demand;
    k.free_prob = 0.0;
    k.unconstrained = true;
  } else {
    k.hire_scale = 1.0 / active_count;
    k.free_prob = 1.0 - demand / active_count;
    k.unconstrained = false;
  }
  return k;
}

Regime classify(const FsruInstance& instance, int t, Location s, Action a,
                const StateDistribution& d) {
  check_query(instance, t, s, a);
  if (a == instance.sink_action()) return Regime::SinkAction;
  if (instance.is_sink(s)) return Regime::SinkState;
  return instance.demand(t, s) >= congestion_input(instance, s, d)
             ? Regime::Unconstrained
             : Regime::Congested;
}

std::vector<double> transition_row(const FsruInstance& instance, int t,
                                   Location s, Action a, double active_count) {
  check_query(instance, t, s, a);
  std::vector<double> row(static_cast<std::size_t>(instance.num_locations()), 0.0);
  if (a == instance.sink_action()) {
    row[static_cast<std::size_t>(instance.sink())] = 1.0;
    return row;
  }
  if (instance.is_sink(s)) {
    row[static_cast<std::size_t>(a)] = 1.0;
    return row;
  }
  if (!(active_count > 0.0)) {
    throw std::domain_error("transition queried from a zone with no active agents");
  }
  const double demand = instance.demand(t, s);
  if (demand >= active_count) {
    for (Location j = 0; j < instance.num_zones; ++j) {
      row[static_cast<std::size_t>(j)] = instance.flow_at(t, s, j) / demand;
    }
    return row;
  }
  double others = 0.0;
  for (Location j = 0; j < instance.num_zones; ++j) {
    if (j == a) continue;
    row[static_cast<std::size_t>(j)] = instance.flow_at(t, s, j) / active_count;
    others += instance.flow_at(t, s, j);
  }
  const double stay = 1.0 - others / active_count;
  assert(stay >= -1e-12);
  row[static_cast<std::size_t>(a)] = stay;
  return row;
}

double expected_reward(const FsruInstance& instance, int t, Location s,
                       Action a, double active_count) {
  check_query(instance, t, s, a);
  if (a == instance.sink_action()) return instance.cost_at(t, s, instance.sink());
  if (instance.is_sink(s)) return instance.cost_at(t, instance.sink(), a);
  const auto row = transition_row(instance, t, s, a, active_count);
  const double demand = instance.demand(t, s);
  double total = 0.0;
  if (demand >= active_count) {
    for (Location j = 0; j < instance.num_zones; ++j) {
      total += row[static_cast<std::size_t>(j)] *
               (instance.fare_at(t, s, j) - instance.cost_at(t, s, j));
    }
    return total;
  }
  // Hired towards any other zone; at the intended zone the fare is earned
  // only by the hired share while the move cost is always paid.
  for (Location j = 0; j < instance.num_zones; ++j) {
    if (j == a) continue;
    total += row[static_cast<std::size_t>(j)] *
             (instance.fare_at(t, s, j) - instance.cost_at(t, s, j));
  }
  total += instance.flow_at(t, s, a) / active_count * instance.fare_at(t, s, a) -
           row[static_cast<std::size_t>(a)] * instance.cost_at(t, s, a);
  return total;
}

std::vector<double> transition_row(const FsruInstance& instance, int t,
                                   Location s, Action a,
                                   const StateDistribution& d) {
  check_query(instance, t, s, a);
  return transition_row(instance, t, s, a, congestion_input(instance, s, d));
}

double expected_reward(const FsruInstance& instance, int t, Location s,
                       Action a, const StateDistribution& d) {
  check_query(instance, t, s, a);
  return expected_reward(instance, t, s, a, congestion_input(instance, s, d));
}

Move sample_transition(const FsruInstance& instance, int t, Location s,
                       Action a, const StateDistribution& d, SplitMix64& rng) {
  check_query(instance, t, s, a);
  if (a == instance.sink_action()) {
    return {instance.sink(), instance.cost_at(t, s, instance.sink()), false};
  }
  if (instance.is_sink(s)) {
    return {a, instance.cost_at(t, instance.sink(), a), false};
  }
  const double active = congestion_input(instance, s, d);
  const auto row = transition_row(instance, t, s, a, active);
  const double u = rng.uniform();
  double acc = 0.0;
  Location next = a;
  for (Location j = instance.num_zones - 1; j >= 0; --j) {
    if (row[static_cast<std::size_t>(j)] > 0.0) {
      next = j;  // rounding fallback
      break;
    }
  }
  for (Location j = 0; j < instance.num_zones; ++j) {
    acc += row[static_cast<std::size_t>(j)];
    if (u < acc) {
      next = j;
      break;
    }
  }
  bool hired = true;
  if (next == a && instance.demand(t, s) < active) {
    const double hired_share = instance.flow_at(t, s, a) / active;
    const double landing = row[static_cast<std::size_t>(a)];
    hired = landing > 0.0 && rng.uniform() < hired_share / landing;
  }
  const double reward = hired ? instance.fare_at(t, s, next) -
                                    instance.cost_at(t, s, next)
                              : -instance.cost_at(t, s, next);
  return {next, reward, hired};
}

TransitionSampler::TransitionSampler(const FsruInstance& instance)
    : instance_(&instance) {
  const int z = instance.num_zones;
  cumulative_.assign(static_cast<std::size_t>(instance.horizon) *
                         static_cast<std::size_t>(z) * static_cast<std::size_t>(z),
                     0.0);
  for (int t = 0; t < instance.horizon; ++t) {
    for (Location s = 0; s < z; ++s) {
      double acc = 0.0;
      const std::size_t base =
          (static_cast<std::size_t>(t) * static_cast<std::size_t>(z) +
           static_cast<std::size_t>(s)) *
          static_cast<std::size_t>(z);
      for (Location j = 0; j < z; ++j) {
        acc += instance.flow_at(t, s, j);
        cumulative_[base + static_cast<std::size_t>(j)] = acc;
      }
    }
  }
}

Move TransitionSampler::sample(int t, Location s, Action a,
                               double active_count, SplitMix64& rng) const {
  const FsruInstance& inst = *instance_;
  if (a == inst.sink_action()) {
    return {inst.sink(), inst.cost_at(t, s, inst.sink()), false};
  }
  if (inst.is_sink(s)) return {a, inst.cost_at(t, inst.sink(), a), false};

  const int z = inst.num_zones;
  const std::size_t base =
      (static_cast<std::size_t>(t) * static_cast<std::size_t>(z) +
       static_cast<std::size_t>(s)) *
      static_cast<std::size_t>(z);
  const double demand = cumulative_[base + static_cast<std::size_t>(z - 1)];
  const CongestionKernel k = congestion_kernel(demand, active_count);
  const double u = rng.uniform();
  const double hire_prob = k.unconstrained ? 1.0 : demand / active_count;
  if (u >= hire_prob) return {a, -inst.cost_at(t, s, a), false};

  // Reuse u: conditional on hiring it is uniform on [0, hire_prob).
  const double target = u / hire_prob * demand;
  const auto first = cumulative_.begin() + static_cast<std::ptrdiff_t>(base);
  const auto last = first + z;
  // upper_bound skips zero-flow destinations sharing a cumulative value.
  auto it = std::upper_bound(first, last, target);
  if (it == last) {
    // Rounding put target on the total; take the last zone with flow.
    --it;
    while (it != first && *it == *(it - 1)) --it;
  }
  const auto next = static_cast<Location>(it - first);
  return {next, inst.fare_at(t, s, next) - inst.cost_at(t, s, next), true};
}

std::vector<Violation> validate_instance(const FsruInstance& instance) {
  std::vector<Violation> out;
  auto add = [&out](std::string field, std::string message) {
    out.push_back({std::move(field), std::move(message)});
  };
  if (instance.num_zones < 1) add("num_zones", "must be at least 1");
  if (instance.horizon < 1) add("horizon", "must be at least 1");
  if (instance.num_agents < 1) add("num_agents", "must be at least 1");
  if (instance.max_hours < 1) add("max_hours", "must be at least 1");
  if (instance.max_breaks < 0) add("max_breaks", "must be non-negative");
  if (instance.num_zones < 1 || instance.horizon < 1) return out;

  const auto l = static_cast<std::size_t>(instance.num_locations());
  const std::size_t expected = static_cast<std::size_t>(instance.horizon) * l * l;
  bool shapes_ok = true;
  for (const auto& [name, tensor] :
       {std::pair<const char*, const std::vector<double>*>{"flow", &instance.flow},
        {"fare", &instance.fare},
        {"cost", &instance.cost}}) {
    if (tensor->size() != expected) {
      add(name, "tensor has " + std::to_string(tensor->size()) +
                    " entries, expected " + std::to_string(expected));
      shapes_ok = false;
    }
  }
  if (!instance.initial_distribution.empty() &&
      instance.initial_distribution.size() != l) {
    add("initial_distribution", "must have one entry per location");
  }
  if (!shapes_ok) return out;

  const Location sink = instance.sink();
  for (int t = 0; t < instance.horizon; ++t) {
    for (Location i = 0; i <= sink; ++i) {
      for (Location j = 0; j <= sink; ++j) {
        const std::size_t idx = instance.index(t, i, j);
        const double f = instance.flow[idx];
        if (!std::isfinite(f) || f < 0.0) {
          add("flow", "negative or non-finite flow at " + cell_name(t, i, j));
        } else if (f != 0.0 && j == sink) {
          add("flow", "customer flow into sink at " + cell_name(t, i, j));
        } else if (f != 0.0 && i == sink) {
          add("flow", "customer flow out of sink at " + cell_name(t, i, j));
        }
        const double r = instance.fare[idx];
        if (!std::isfinite(r) || r < 0.0) {
          add("fare", "negative or non-finite fare at " + cell_name(t, i, j));
        }
        if (!std::isfinite(instance.cost[idx])) {
          add("cost", "non-finite cost at " + cell_name(t, i, j));
        }
      }
    }
  }
  return out;
}

}  // namespace fsru
