#pragma once

#include <cstddef>
#include <vector>

#include "fsru/augmented.hpp"
#include "fsru/model.hpp"

namespace fsru {

// Probability mass over i = offset .. offset + probs.size() - 1 other agents.
struct CountPmf {
  int offset = 0;
  std::vector<double> probs;

  double prob(int i) const {
    const int k = i - offset;
    return k >= 0 && k < static_cast<int>(probs.size())
               ? probs[static_cast<std::size_t>(k)]
               : 0.0;
  }
  double mean() const;
};

// Binomial(trials, p) restricted to the smallest interval around the mode
// holding at least 1 - tail_mass, then renormalized.
CountPmf binomial_pmf(int trials, double p, double tail_mass = 1e-6);

// For every (t, zone): distribution of the number of OTHER active agents.
struct CountModel {
  int others = 0;
  int horizon = 0;
  int num_zones = 0;
  std::vector<CountPmf> pmfs;      // [t * Z + s]
  std::vector<double> presence;    // q^t(s): one agent's presence probability

  const CountPmf& at(int t, Location s) const {
    return pmfs[static_cast<std::size_t>(t) * static_cast<std::size_t>(num_zones) +
                static_cast<std::size_t>(s)];
  }
};

// Forward-propagates the policy once, using others * q^t + 1 as the congestion
// input at each step, and fits an independent-agent binomial per (t, zone).
CountModel agent_count_probability(const Policy& policy,
                                   const FsruInstance& instance, int others);

// Count-model expectation of the congestion kernel, evaluated at d_s = i + 1
// (the best-responding agent joins the i others).
struct ExpectedKernel {
  int horizon = 0;
  int num_zones = 0;
  std::vector<double> hire;  // E[hire_scale]
  std::vector<double> free;  // E[free_prob]

  double hire_at(int t, Location s) const { return hire[slot(t, s)]; }
  double free_at(int t, Location s) const { return free[slot(t, s)]; }
  std::size_t slot(int t, Location s) const {
    return static_cast<std::size_t>(t) * static_cast<std::size_t>(num_zones) +
           static_cast<std::size_t>(s);
  }
};

ExpectedKernel expected_kernel(const CountModel& counts, const FsruInstance& instance);

// One agent's view of the game once the other agents are summarized by an
// expected kernel: expected rewards and transitions over augmented states.
class SingleAgentModel {
 public:
  SingleAgentModel(const FsruInstance& instance, ExpectedKernel kernel);

  const FsruInstance& instance() const { return *instance_; }
  const ExpectedKernel& kernel() const { return kernel_; }

  double reward(int t, Location s, Action a) const;
  // Sum over destinations of fl * (fare - cost): the hired margin.
  double hired_margin(int t, Location s) const {
    return hired_margin_[kernel_.slot(t, s)];
  }

 private:
  const FsruInstance* instance_;
  ExpectedKernel kernel_;
  std::vector<double> hired_margin_;
};

// Occupancy x of a policy for one agent starting at the sink with unit mass.
OccupancyMatrix policy_occupancy(const Policy& policy, const SingleAgentModel& model);

double occupancy_value(const OccupancyMatrix& occupancy, const SingleAgentModel& model);
double policy_value(const Policy& policy, const SingleAgentModel& model);

}  // namespace fsru
