#include "fsru/sbr.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "fsru/count_model.hpp"
#include "fsru/parallel.hpp"
#include "fsru/rng.hpp"

namespace fsru {

namespace {

void check_shape(const Policy& policy, const FsruInstance& instance) {
  const auto& space = policy.space();
  if (space.num_zones() != instance.num_zones || space.horizon() != instance.horizon ||
      space.max_hours() != instance.max_hours ||
      space.max_breaks() != instance.max_breaks) {
    throw std::invalid_argument("policy shape does not match instance");
  }
}

Action sample_action(std::span<const double> row, const AugmentedSpace& space,
                     SplitMix64& rng) {
  const double draw = rng.uniform();
  double acc = 0.0;
  Action fallback = space.sink_action();
  for (Action a = 0; a < space.num_actions(); ++a) {
    const double p = row[static_cast<std::size_t>(a)];
    if (p <= 0.0) continue;
    fallback = a;
    acc += p;
    if (draw < acc) return a;
  }
  return fallback;
}

template <bool kRecord>
void run_agents(const Policy& input, const FsruInstance& instance, std::uint64_t seed,
                int agents, std::vector<Trajectory>* trajectories,
                std::vector<StateDistribution>* trace, std::vector<double>* revenues) {
  check_shape(input, instance);
  if (agents <= 0) agents = instance.num_agents;
  const Policy* policy = &input;
  Policy cleaned;
  if (feasibility_error(input) > 1e-9) {
    cleaned = input;
    enforce_feasibility(cleaned);
    policy = &cleaned;
  }
  const auto& space = policy->space();
  const TransitionSampler sampler(instance);
  const auto n = static_cast<std::size_t>(agents);
  std::vector<AugmentedState> state(n, AugmentedState{space.sink(), 0, 0});
  std::vector<SplitMix64> rng;
  rng.reserve(n);
  for (std::size_t j = 0; j < n; ++j) rng.push_back(make_stream(seed, j));
  revenues->assign(n, 0.0);
  if (kRecord) {
    trajectories->assign(n, Trajectory{});
    for (std::size_t j = 0; j < n; ++j) {
      (*trajectories)[j].agent = static_cast<int>(j);
      (*trajectories)[j].steps.reserve(static_cast<std::size_t>(instance.horizon));
    }
  }
  std::vector<double> counts(static_cast<std::size_t>(space.num_locations()));
  for (int t = 0; t < instance.horizon; ++t) {
    std::fill(counts.begin(), counts.end(), 0.0);
    for (const auto& u : state) counts[static_cast<std::size_t>(u.location)] += 1.0;
    if (trace) trace->push_back({counts});
    parallel_for(n, [&](std::size_t begin, std::size_t end) {
      for (std::size_t j = begin; j < end; ++j) {
        const AugmentedState u = state[j];
        const auto row = policy->row(space.state_index(t, u));
        const Action a = sample_action(row, space, rng[j]);
        const Move move = sampler.sample(t, u.location, a,
                                         counts[static_cast<std::size_t>(u.location)], rng[j]);
        (*revenues)[j] += move.reward;
        if (kRecord) {
          auto& traj = (*trajectories)[j];
          traj.steps.push_back({t, u, a, move.next, move.reward});
          traj.total_revenue += move.reward;
        }
        state[j] = space.after(u, a, move.next);
      }
    }, 512);
  }
}

// Row-wise projection of candidate values onto a feasible distribution.
// Returns false when the row carries no positive feasible mass.
bool project_row(const AugmentedSpace& space, const AugmentedState& u,
                 std::span<const double> values, std::span<double> out) {
  double total = 0.0;
  for (Action a = 0; a < space.num_actions(); ++a) {
    const double v = values[static_cast<std::size_t>(a)];
    const double x = space.feasible(u, a) && v > 0.0 ? v : 0.0;
    out[static_cast<std::size_t>(a)] = x;
    total += x;
  }
  if (!(total > 0.0) || !std::isfinite(total)) return false;
  for (auto& x : out) x /= total;
  return true;
}

void uniform_row(const AugmentedSpace& space, const AugmentedState& u,
                 std::span<const double> support, std::span<double> out) {
  int count = 0;
  for (Action a = 0; a < space.num_actions(); ++a) {
    const bool ok = space.feasible(u, a) &&
                    (support.empty() || support[static_cast<std::size_t>(a)] > 0.0);
    count += ok ? 1 : 0;
  }
  if (count == 0) {
    uniform_row(space, u, {}, out);
    return;
  }
  for (Action a = 0; a < space.num_actions(); ++a) {
    const bool ok = space.feasible(u, a) &&
                    (support.empty() || support[static_cast<std::size_t>(a)] > 0.0);
    out[static_cast<std::size_t>(a)] = ok ? 1.0 / count : 0.0;
  }
}

bool row_local(const std::string& method) {
  return method == "supervised" || method == "none";
}

}  // namespace

Simulation simulate(const Policy& policy, const FsruInstance& instance, std::uint64_t seed,
                    int agents) {
  Simulation sim;
  std::vector<double> revenues;
  run_agents<true>(policy, instance, seed, agents, &sim.trajectories, &sim.trace, &revenues);
  return sim;
}

std::vector<double> simulate_revenues(const Policy& policy, const FsruInstance& instance,
                                      std::uint64_t seed, int agents) {
  std::vector<double> revenues;
  run_agents<false>(policy, instance, seed, agents, nullptr, nullptr, &revenues);
  return revenues;
}

std::vector<std::size_t> top_k_indices(const std::vector<Trajectory>& trajectories, int k) {
  if (trajectories.empty()) throw std::invalid_argument("top-k: no trajectories");
  if (k < 1 || static_cast<std::size_t>(k) > trajectories.size()) {
    throw std::invalid_argument("top-k: k must be in [1, number of trajectories]");
  }
  std::vector<std::size_t> order(trajectories.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto kk = static_cast<std::ptrdiff_t>(k);
  std::partial_sort(order.begin(), order.begin() + kk, order.end(),
                    [&](std::size_t a, std::size_t b) {
                      const auto& x = trajectories[a];
                      const auto& y = trajectories[b];
                      if (x.total_revenue != y.total_revenue) {
                        return x.total_revenue > y.total_revenue;
                      }
                      return x.agent < y.agent;
                    });
  order.resize(static_cast<std::size_t>(k));
  return order;
}

OccupancyMatrix top_k_weighted_path(const std::vector<Trajectory>& trajectories, int k,
                                    const AugmentedSpace& space) {
  const auto top = top_k_indices(trajectories, k);
  const double floor = trajectories[top.back()].total_revenue;
  std::vector<double> weight(top.size());
  double total = 0.0;
  for (std::size_t r = 0; r < top.size(); ++r) {
    weight[r] = trajectories[top[r]].total_revenue - floor + kWeightShift;
    total += weight[r];
  }
  OccupancyMatrix occ(space);
  occ.enable_mask(false);
  for (std::size_t r = 0; r < top.size(); ++r) {
    const double w = weight[r] / total;
    for (const auto& step : trajectories[top[r]].steps) {
      const std::size_t cell = space.cell_index(step.t, step.state, step.action);
      occ.values()[cell] += w;
      occ.mask()[cell] = 1;
    }
  }
  return occ;
}

OccupancyMatrix empirical_occupancy(const std::vector<Trajectory>& trajectories,
                                    const AugmentedSpace& space) {
  if (trajectories.empty()) throw std::invalid_argument("empirical occupancy: no trajectories");
  OccupancyMatrix occ(space);
  const double w = 1.0 / static_cast<double>(trajectories.size());
  for (const auto& traj : trajectories) {
    for (const auto& step : traj.steps) {
      occ.values()[space.cell_index(step.t, step.state, step.action)] += w;
    }
  }
  return occ;
}

ImputationProblem build_imputation_problem(const OccupancyMatrix& partial,
                                           const std::vector<std::size_t>& states) {
  const auto& space = partial.space();
  const int actions = space.num_actions();
  const auto rows = static_cast<Eigen::Index>(states.size());
  const Eigen::Index cols = kFeatureColumns + actions;
  ImputationProblem p;
  p.data = Eigen::MatrixXd::Zero(rows, cols);
  p.observed = MissingMask::Constant(rows, cols, true);
  p.feature.assign(static_cast<std::size_t>(cols), false);
  for (int c = 0; c < kFeatureColumns; ++c) p.feature[static_cast<std::size_t>(c)] = true;
  for (Eigen::Index i = 0; i < rows; ++i) {
    const std::size_t state = states[static_cast<std::size_t>(i)];
    const auto [t, u] = space.decode(state);
    p.data(i, 0) = t;
    p.data(i, 1) = u.location;
    p.data(i, 2) = u.hours_served;
    p.data(i, 3) = u.breaks_taken;
    const std::size_t base = state * static_cast<std::size_t>(actions);
    double seen = 0.0;
    for (Action a = 0; a < actions; ++a) {
      if (space.feasible(u, a) && partial.observed(base + static_cast<std::size_t>(a))) {
        seen += partial.values()[base + static_cast<std::size_t>(a)];
      }
    }
    for (Action a = 0; a < actions; ++a) {
      const Eigen::Index c = kFeatureColumns + a;
      const std::size_t cell = base + static_cast<std::size_t>(a);
      if (!space.feasible(u, a)) continue;  // observed zero
      if (partial.observed(cell) && seen > 0.0) {
        p.data(i, c) = partial.values()[cell] / seen;
      } else {
        p.observed(i, c) = false;
      }
    }
  }
  return p;
}

SbrStepResult sbr_step(const Policy& policy, const FsruInstance& instance,
                       const SbrStepConfig& config, std::uint64_t seed) {
  if (config.imputer.method == "gain") {
    throw std::invalid_argument("imputer 'gain' is unimplemented");
  }
  if (!is_known_imputer(config.imputer.method)) {
    throw std::invalid_argument("unknown imputer '" + config.imputer.method + "'");
  }
  const auto& space = policy.space();
  const Policy& reference = config.reference ? *config.reference : policy;
  if (!(reference.space() == space)) {
    throw std::invalid_argument("sbr step: reference policy shape differs");
  }
  SbrStepResult out;
  {
    const Simulation sim = simulate(policy, instance, seed, config.agents);
    out.partial = top_k_weighted_path(sim.trajectories, config.k, space);
  }
  const auto reachable = structurally_reachable(space);
  const bool local = row_local(config.imputer.method);
  const int actions = space.num_actions();

  std::vector<std::size_t> rows;
  std::vector<std::size_t> skipped;
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    if (!reachable[s]) continue;
    bool any = false;
    if (local) {
      const std::size_t base = s * static_cast<std::size_t>(actions);
      for (Action a = 0; a < actions && !any; ++a) {
        any = out.partial.mask()[base + static_cast<std::size_t>(a)] != 0;
      }
    }
    (!local || any ? rows : skipped).push_back(s);
  }
  out.observed_rows = rows.size();

  ImputerConfig imputer = config.imputer;
  if (imputer.method == "supervised" && !imputer.reference) {
    imputer.reference = [&](Eigen::Index i, Eigen::Index j) {
      const std::size_t state = rows[static_cast<std::size_t>(i)];
      if (j < kFeatureColumns) return std::numeric_limits<double>::quiet_NaN();
      return reference.row(state)[static_cast<std::size_t>(j - kFeatureColumns)];
    };
  }
  const ImputationProblem problem = build_imputation_problem(out.partial, rows);
  try {
    out.imputation = impute(problem, imputer);
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("sbr step: imputation failed: ") + e.what());
  }

  out.policy = policy;
  std::vector<double> values(static_cast<std::size_t>(actions));
  const bool ablated = imputer.method == "none";
  auto finish_row = [&](std::size_t state) {
    const auto u = space.decode(state).second;
    auto row = out.policy.row(state);
    if (project_row(space, u, values, row)) return;
    ++out.fallback_rows;
    uniform_row(space, u, ablated ? policy.row(state) : std::span<const double>{}, row);
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (Action a = 0; a < actions; ++a) {
      values[static_cast<std::size_t>(a)] =
          out.imputation.values(static_cast<Eigen::Index>(i), kFeatureColumns + a);
    }
    finish_row(rows[i]);
  }
  for (const std::size_t state : skipped) {
    const auto ref = reference.row(state);
    for (Action a = 0; a < actions; ++a) {
      values[static_cast<std::size_t>(a)] = ablated ? 0.0 : ref[static_cast<std::size_t>(a)];
    }
    finish_row(state);
  }
  return out;
}

FpResult run_sbr(const FsruInstance& instance, const SbrConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  const AugmentedSpace space = AugmentedSpace::of(instance, config.mode);
  const int others = instance.num_agents - 1;
  Policy current = config.initial ? *config.initial : uniform_start_policy(space);
  if (!(current.space() == space)) {
    throw std::invalid_argument("run_sbr: initial policy shape differs from instance");
  }
  enforce_feasibility(current);
  if (config.reference && !(config.reference->space() == space)) {
    throw std::invalid_argument("run_sbr: reference policy shape differs from instance");
  }

  auto model_of = [&](const Policy& p) {
    return SingleAgentModel(instance,
                            expected_kernel(agent_count_probability(p, instance, others), instance));
  };
  OccupancyMatrix average = policy_occupancy(current, model_of(current));

  FpResult result;
  double best_gap = std::numeric_limits<double>::infinity();
  Policy best_policy = current;
  OccupancyMatrix best_average = average;
  int best_iteration = 0;

  SbrStepConfig step;
  step.k = config.k;
  step.imputer = config.imputer;
  step.agents = config.agents;
  const std::size_t actions = static_cast<std::size_t>(space.num_actions());

  for (int i = 1; i <= config.max_iters; ++i) {
    const SingleAgentModel model = model_of(current);
    if (config.track_exploitability) {
      const auto br = exact_best_response(model, config.mode);
      const double gap = br.value - policy_value(current, model);
      result.report.exploitability_history.push_back(gap);
      if (gap < best_gap) {
        best_gap = gap;
        best_policy = current;
        best_average = average;
        best_iteration = i - 1;
      }
    }
    step.reference = config.reference ? &*config.reference : &current;
    const SbrStepResult sbr =
        sbr_step(current, instance, step, derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    const OccupancyMatrix response = policy_occupancy(sbr.policy, model);

    auto& x = average.values();
    const auto& y = response.values();
    const double w = static_cast<double>(i);
    for (std::size_t c = 0; c < x.size(); ++c) x[c] = (x[c] * w + y[c]) / (w + 1.0);

    // Rows without mass keep their previous distribution.
    Policy next(space);
    for (std::size_t s = 0; s < space.num_states(); ++s) {
      const auto u = space.decode(s).second;
      auto row = next.row(s);
      const std::span<const double> mass{x.data() + s * actions, actions};
      if (!project_row(space, u, mass, row)) {
        const auto prev = current.row(s);
        std::copy(prev.begin(), prev.end(), row.begin());
      }
    }
    const double delta = max_abs_difference(next, current);
    result.report.delta_history.push_back(delta);
    result.report.iterations = i;
    result.report.final_delta = delta;
    current = std::move(next);
    if (config.observer) config.observer({i, &response, &average, &current, delta});
    if (delta <= config.epsilon) {
      result.report.converged = true;
      break;
    }
  }

  if (result.report.converged || !config.track_exploitability ||
      result.report.iterations == 0) {
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

void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  out << "agent,t,s,n,b,a,s',reward\n";
  for (const auto& traj : trajectories) {
    for (const auto& st : traj.steps) {
      out << traj.agent << ',' << st.t << ',' << st.state.location << ','
          << st.state.hours_served << ',' << st.state.breaks_taken << ',' << st.action << ','
          << st.next << ',' << st.reward << '\n';
    }
  }
}

}  // namespace fsru
