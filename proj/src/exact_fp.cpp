#include "fsru/exact_fp.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace fsru {

BestResponse exact_best_response(const SingleAgentModel& model, ShiftMode mode) {
  const FsruInstance& instance = model.instance();
  if (instance.max_hours < 1) {
    throw std::invalid_argument("best response needs max_hours >= 1");
  }
  if (instance.max_breaks < 0) {
    throw std::invalid_argument("best response needs max_breaks >= 0");
  }
  const AugmentedSpace space = AugmentedSpace::of(instance, mode);
  const int z = instance.num_zones;
  const int nh = space.max_hours() + 1;
  const int nb = space.max_breaks() + 1;
  const Location sink = space.sink();
  const Action sink_action = space.sink_action();
  const std::size_t per_step = space.states_per_step();
  const auto local = [&](Location loc, int n, int b) {
    return (static_cast<std::size_t>(loc) * static_cast<std::size_t>(nh) +
            static_cast<std::size_t>(n)) *
               static_cast<std::size_t>(nb) +
           static_cast<std::size_t>(b);
  };

  BestResponse br;
  br.policy = Policy(space);
  std::vector<double> value_next(per_step, 0.0);
  std::vector<double> value_now(per_step, 0.0);
  std::vector<double> q(static_cast<std::size_t>(space.num_actions()));

  for (int t = instance.horizon - 1; t >= 0; --t) {
    for (Location loc = 0; loc <= z; ++loc) {
      for (int n = 0; n < nh; ++n) {
        for (int b = 0; b < nb; ++b) {
          const AugmentedState u{loc, n, b};
          std::fill(q.begin(), q.end(), -std::numeric_limits<double>::infinity());
          if (loc == sink) {
            q[static_cast<std::size_t>(sink_action)] =
                instance.cost_at(t, sink, sink) + value_next[local(sink, n, b)];
            for (Action a = 0; a < z; ++a) {
              if (!space.feasible(u, a)) continue;
              q[static_cast<std::size_t>(a)] =
                  instance.cost_at(t, sink, a) + value_next[local(a, n, b)];
            }
          } else {
            if (n < space.max_hours()) {
              double shared = 0.0;
              for (Location j = 0; j < z; ++j) {
                const double f = instance.flow_at(t, loc, j);
                if (f != 0.0) shared += f * value_next[local(j, n + 1, b)];
              }
              shared *= model.kernel().hire_at(t, loc);
              const double free = model.kernel().free_at(t, loc);
              for (Action a = 0; a < z; ++a) {
                q[static_cast<std::size_t>(a)] =
                    model.reward(t, loc, a) + shared +
                    free * value_next[local(a, n + 1, b)];
              }
            }
            if (space.feasible(u, sink_action)) {
              const auto v = space.after(u, sink_action, sink);
              q[static_cast<std::size_t>(sink_action)] =
                  instance.cost_at(t, loc, sink) +
                  value_next[local(sink, v.hours_served, v.breaks_taken)];
            }
          }
          Action best = -1;
          double best_q = -std::numeric_limits<double>::infinity();
          for (Action a = 0; a <= z; ++a) {
            if (q[static_cast<std::size_t>(a)] > best_q) {
              best_q = q[static_cast<std::size_t>(a)];
              best = a;
            }
          }
          value_now[local(loc, n, b)] = best_q;
          br.policy.at(t, u, best) = 1.0;
        }
      }
    }
    value_now.swap(value_next);
  }
  br.value = value_next[local(sink, 0, 0)];
  br.occupancy = policy_occupancy(br.policy, model);
  return br;
}

BestResponse exact_best_response(const CountModel& counts, const FsruInstance& instance,
                                 ShiftMode mode) {
  return exact_best_response(SingleAgentModel(instance, expected_kernel(counts, instance)),
                             mode);
}

double exploitability(const Policy& policy, const FsruInstance& instance) {
  const auto counts = agent_count_probability(policy, instance, instance.num_agents - 1);
  const SingleAgentModel model(instance, expected_kernel(counts, instance));
  const auto br = exact_best_response(model, policy.space().mode());
  return br.value - policy_value(policy, model);
}

FpResult run_fp(const FsruInstance& instance, const FpConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const AugmentedSpace space = AugmentedSpace::of(instance, config.mode);
  const int others = instance.num_agents - 1;

  Policy current = uniform_start_policy(space);
  auto counts = agent_count_probability(current, instance, others);
  OccupancyMatrix average =
      policy_occupancy(current, SingleAgentModel(instance, expected_kernel(counts, instance)));

  FpResult result;
  double best_exploitability = std::numeric_limits<double>::infinity();
  Policy best_policy = current;
  OccupancyMatrix best_average = average;
  int best_iteration = 0;

  for (int i = 1; i <= config.max_iters; ++i) {
    counts = agent_count_probability(current, instance, others);
    const SingleAgentModel model(instance, expected_kernel(counts, instance));
    const auto br = exact_best_response(model, config.mode);
    const double gap = br.value - policy_value(current, model);
    result.report.exploitability_history.push_back(gap);
    if (gap < best_exploitability) {
      best_exploitability = gap;
      best_policy = current;
      best_average = average;
      best_iteration = i - 1;
    }

    auto& x = average.values();
    const auto& y = br.occupancy.values();
    const double w = static_cast<double>(i);
    for (std::size_t c = 0; c < x.size(); ++c) x[c] = (x[c] * w + y[c]) / (w + 1.0);
    Policy next = occupancy_to_policy(average);
    const double delta = max_abs_difference(next, current);
    result.report.delta_history.push_back(delta);
    result.report.iterations = i;
    result.report.final_delta = delta;
    current = std::move(next);
    if (config.observer) {
      config.observer({i, &br.occupancy, &average, &current, delta});
    }
    if (delta <= config.epsilon) {
      result.report.converged = true;
      break;
    }
  }

  if (result.report.converged || result.report.iterations == 0) {
    result.policy = std::move(current);
    result.occupancy = std::move(average);
    result.report.best_iteration = result.report.iterations;
  } else {
    result.policy = std::move(best_policy);
    result.occupancy = std::move(best_average);
    result.report.best_iteration = best_iteration;
  }
  result.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

}  // namespace fsru
