#pragma once

// Game definition for flexible taxi routing under demand uncertainty:
// zones plus a sink (off-duty) location, congestion-dependent transitions
// and expected rewards, and sampling of realized moves.

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fsru/rng.hpp"

namespace fsru {

// Zones are 0..Z-1 and the sink is Z. The action with index Z is the break
// (sink) action; every other action index names its target zone.
using Location = int;
using Action = int;

struct FsruInstance {
  int num_zones = 0;
  int horizon = 0;
  int num_agents = 1;
  int max_hours = 1;   // steps an agent may spend serving
  int max_breaks = 0;  // sink entries allowed before the hour budget is spent

  // Dense [t][from][to] tensors over locations (zones + sink).
  std::vector<double> flow;
  std::vector<double> fare;
  std::vector<double> cost;

  // Accepted from instance files but not used by either solver: every agent
  // starts at the sink before its first entry.
  std::vector<double> initial_distribution;

  static FsruInstance zeros(int num_zones, int horizon, int num_agents,
                            int max_hours, int max_breaks);

  Location sink() const { return num_zones; }
  Action sink_action() const { return num_zones; }
  int num_locations() const { return num_zones + 1; }
  int num_actions() const { return num_zones + 1; }
  bool is_sink(Location s) const { return s == num_zones; }

  std::size_t index(int t, Location from, Location to) const {
    const auto l = static_cast<std::size_t>(num_locations());
    return (static_cast<std::size_t>(t) * l + static_cast<std::size_t>(from)) *
               l +
           static_cast<std::size_t>(to);
  }
  double flow_at(int t, Location from, Location to) const {
    return flow[index(t, from, to)];
  }
  double fare_at(int t, Location from, Location to) const {
    return fare[index(t, from, to)];
  }
  double cost_at(int t, Location from, Location to) const {
    return cost[index(t, from, to)];
  }

  // Customer demand leaving zone s at step t.
  double demand(int t, Location s) const;

  bool operator==(const FsruInstance&) const = default;
};

// Three zones with one customer between every ordered pair of distinct
// zones, unit fares and zero costs.
FsruInstance example_instance(int horizon = 1, int num_agents = 6,
                              int max_hours = -1, int max_breaks = 0);

struct StateDistribution {
  std::vector<double> counts;  // zones then sink

  double active(Location s) const { return counts.at(static_cast<std::size_t>(s)); }
};

// Hiring structure of one zone at one step for a given active count d:
// T(s,a,s') = hire_scale * fl(s,s') + [s' == a] * free_prob.
struct CongestionKernel {
  double hire_scale = 0.0;
  double free_prob = 0.0;
  bool unconstrained = true;  // demand covers every taxi present
};

// Throws std::domain_error when active_count <= 0.
CongestionKernel congestion_kernel(double demand, double active_count);

enum class Regime { SinkAction, SinkState, Unconstrained, Congested };

Regime classify(const FsruInstance& instance, int t, Location s, Action a,
                const StateDistribution& d);

// Probability over next locations (zones then sink).
std::vector<double> transition_row(const FsruInstance& instance, int t,
                                   Location s, Action a,
                                   const StateDistribution& d);

double expected_reward(const FsruInstance& instance, int t, Location s,
                       Action a, const StateDistribution& d);

// Scalar-count forms used by the solvers; active_count is d_s.
std::vector<double> transition_row(const FsruInstance& instance, int t,
                                   Location s, Action a, double active_count);
double expected_reward(const FsruInstance& instance, int t, Location s,
                       Action a, double active_count);

struct Move {
  Location next = 0;
  double reward = 0.0;
  bool hired = false;
};

Move sample_transition(const FsruInstance& instance, int t, Location s,
                       Action a, const StateDistribution& d, SplitMix64& rng);

// Precomputed per-(t, zone) destination tables for fast repeated sampling.
class TransitionSampler {
 public:
  explicit TransitionSampler(const FsruInstance& instance);

  Move sample(int t, Location s, Action a, double active_count,
              SplitMix64& rng) const;

  const FsruInstance& instance() const { return *instance_; }

 private:
  const FsruInstance* instance_;
  // Cumulative customer flow per (t, zone) over destination zones.
  std::vector<double> cumulative_;
};

struct Violation {
  std::string field;
  std::string message;
};

std::vector<Violation> validate_instance(const FsruInstance& instance);

}  // namespace fsru
