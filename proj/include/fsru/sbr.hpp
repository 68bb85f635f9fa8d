#pragma once

// Simulation-based best response: simulate the shared policy for every agent,
// keep the top-k trajectories by revenue, turn them into a revenue-weighted
// partial occupancy, complete it with an imputer and renormalize.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fsru/augmented.hpp"
#include "fsru/exact_fp.hpp"
#include "fsru/imputation.hpp"
#include "fsru/model.hpp"

namespace fsru {

struct TrajectoryStep {
  int t = 0;
  AugmentedState state;
  Action action = 0;
  Location next = 0;
  double reward = 0.0;
};

struct Trajectory {
  int agent = 0;
  std::vector<TrajectoryStep> steps;
  double total_revenue = 0.0;
};

struct Simulation {
  std::vector<Trajectory> trajectories;
  std::vector<StateDistribution> trace;  // d^t before the agents act
};

// Synchronous simulation of num_agents agents. Agent j draws from its own
// stream derived from (seed, j), so results do not depend on threading.
// When agents is 0 the instance's agent count is used.
Simulation simulate(const Policy& policy, const FsruInstance& instance,
                    std::uint64_t seed, int agents = 0);

// Revenue totals only; avoids storing trajectories.
std::vector<double> simulate_revenues(const Policy& policy, const FsruInstance& instance,
                                      std::uint64_t seed, int agents = 0);

// Indices of the k best trajectories, revenue descending, ties by agent.
std::vector<std::size_t> top_k_indices(const std::vector<Trajectory>& trajectories, int k);

inline constexpr double kWeightShift = 1e-6;

// Cells visited by the selected trajectories carry the summed normalized
// trajectory weights; all other cells are masked as missing.
OccupancyMatrix top_k_weighted_path(const std::vector<Trajectory>& trajectories, int k,
                                    const AugmentedSpace& space);

// Unweighted visitation counts of all trajectories divided by their number.
OccupancyMatrix empirical_occupancy(const std::vector<Trajectory>& trajectories,
                                    const AugmentedSpace& space);

struct SbrStepConfig {
  int k = 500;
  ImputerConfig imputer;
  // Reference for supervised imputation; the input policy when null.
  const Policy* reference = nullptr;
  int agents = 0;  // 0: instance agent count
};

struct SbrStepResult {
  Policy policy;
  OccupancyMatrix partial;  // top-k weighted path before imputation
  ImputationResult imputation;
  std::size_t observed_rows = 0;
  std::size_t fallback_rows = 0;
};

// Builds the imputation matrix from a partial occupancy. Rows are the given
// states; the first four columns hold (t, location, n, b) and the remaining
// columns one action each, in conditional-frequency units per row.
// Infeasible actions are observed zeros.
ImputationProblem build_imputation_problem(const OccupancyMatrix& partial,
                                           const std::vector<std::size_t>& states);

inline constexpr int kFeatureColumns = 4;

SbrStepResult sbr_step(const Policy& policy, const FsruInstance& instance,
                       const SbrStepConfig& config, std::uint64_t seed);

struct SbrConfig {
  int k = 500;
  ImputerConfig imputer;
  double epsilon = 1e-3;
  int max_iters = 500;
  std::uint64_t seed = 0;
  ShiftMode mode = ShiftMode::Flexible;
  int agents = 0;
  // Start from this policy instead of the uniform one.
  std::optional<Policy> initial;
  // Fixed supervised reference; the running average policy when empty.
  std::optional<Policy> reference;
  bool track_exploitability = true;
  std::function<void(const FpIteration&)> observer;
};

// Fictitious play with sbr_step as best response. The best-response occupancy
// that enters the running average is the analytic occupancy of the sbr_step
// policy against the count model of the current average.
FpResult run_sbr(const FsruInstance& instance, const SbrConfig& config = {});

// CSV: agent,t,s,n,b,a,s',reward
void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories);

}  // namespace fsru
