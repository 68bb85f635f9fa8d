#pragma once

// Augmented states (location, hours served, breaks taken) and the policy and
// occupancy tensors defined over them.
//
// Shift rules shared by every solver:
//  * every agent starts at the sink with n = 0, b = 0 ("not started") and may
//    stay there at no cost;
//  * a zone action taken in a zone is one step of service: n increments;
//  * entering the sink from a zone increments b; this is allowed while
//    b < max_breaks, and always once the hour budget is spent (n == max_hours);
//  * from the sink an agent may (re-)enter any zone while n < max_hours.
// Rigid mode additionally forbids leaving before the budget is spent and
// re-entering after leaving, so a shift is one contiguous block.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "fsru/model.hpp"

namespace fsru {

enum class ShiftMode { Flexible, Rigid };

struct AugmentedState {
  Location location = 0;
  int hours_served = 0;
  int breaks_taken = 0;

  bool operator==(const AugmentedState&) const = default;
};

class AugmentedSpace {
 public:
  AugmentedSpace() = default;
  AugmentedSpace(int num_zones, int horizon, int max_hours, int max_breaks,
                 ShiftMode mode = ShiftMode::Flexible);

  static AugmentedSpace of(const FsruInstance& instance,
                           ShiftMode mode = ShiftMode::Flexible);

  int num_zones() const { return num_zones_; }
  int horizon() const { return horizon_; }
  int max_hours() const { return max_hours_; }
  int max_breaks() const { return max_breaks_; }
  ShiftMode mode() const { return mode_; }
  int num_locations() const { return num_zones_ + 1; }
  int num_actions() const { return num_zones_ + 1; }
  Location sink() const { return num_zones_; }
  Action sink_action() const { return num_zones_; }

  std::size_t states_per_step() const {
    return static_cast<std::size_t>(num_locations()) *
           static_cast<std::size_t>(max_hours_ + 1) *
           static_cast<std::size_t>(max_breaks_ + 1);
  }
  std::size_t num_states() const {
    return static_cast<std::size_t>(horizon_) * states_per_step();
  }
  std::size_t num_cells() const {
    return num_states() * static_cast<std::size_t>(num_actions());
  }

  std::size_t state_index(int t, const AugmentedState& u) const {
    return ((static_cast<std::size_t>(t) * static_cast<std::size_t>(num_locations()) +
             static_cast<std::size_t>(u.location)) *
                static_cast<std::size_t>(max_hours_ + 1) +
            static_cast<std::size_t>(u.hours_served)) *
               static_cast<std::size_t>(max_breaks_ + 1) +
           static_cast<std::size_t>(u.breaks_taken);
  }
  std::size_t cell_index(int t, const AugmentedState& u, Action a) const {
    return state_index(t, u) * static_cast<std::size_t>(num_actions()) +
           static_cast<std::size_t>(a);
  }
  // Inverse of state_index.
  std::pair<int, AugmentedState> decode(std::size_t state) const;

  bool feasible(const AugmentedState& u, Action a) const;
  int feasible_count(const AugmentedState& u) const;

  // State after taking a from u and landing in `landing`.
  AugmentedState after(const AugmentedState& u, Action a, Location landing) const;

  bool operator==(const AugmentedSpace&) const = default;

 private:
  int num_zones_ = 0;
  int horizon_ = 0;
  int max_hours_ = 1;
  int max_breaks_ = 0;
  ShiftMode mode_ = ShiftMode::Flexible;
};

// Dense tensor over (t, location, n, b, action).
class StateActionTensor {
 public:
  StateActionTensor() = default;
  explicit StateActionTensor(const AugmentedSpace& space, double fill = 0.0)
      : space_(space), values_(space.num_cells(), fill) {}

  const AugmentedSpace& space() const { return space_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& at(int t, const AugmentedState& u, Action a) {
    return values_[space_.cell_index(t, u, a)];
  }
  double at(int t, const AugmentedState& u, Action a) const {
    return values_[space_.cell_index(t, u, a)];
  }
  std::span<double> row(std::size_t state) {
    return {values_.data() + state * static_cast<std::size_t>(space_.num_actions()),
            static_cast<std::size_t>(space_.num_actions())};
  }
  std::span<const double> row(std::size_t state) const {
    return {values_.data() + state * static_cast<std::size_t>(space_.num_actions()),
            static_cast<std::size_t>(space_.num_actions())};
  }

 protected:
  AugmentedSpace space_;
  std::vector<double> values_;
};

// pi^t(s, n, b, a). Rows of feasible states sum to one; infeasible actions
// carry zero probability.
class Policy : public StateActionTensor {
 public:
  using StateActionTensor::StateActionTensor;
};

// x^t(s, n, b, a): visitation mass. An empty mask means fully observed.
class OccupancyMatrix : public StateActionTensor {
 public:
  using StateActionTensor::StateActionTensor;

  bool has_mask() const { return !observed_.empty(); }
  bool observed(std::size_t cell) const {
    return observed_.empty() || observed_[cell] != 0;
  }
  std::vector<std::uint8_t>& mask() { return observed_; }
  const std::vector<std::uint8_t>& mask() const { return observed_; }
  void enable_mask(bool observed_default) {
    observed_.assign(values_.size(), observed_default ? 1 : 0);
  }

 private:
  std::vector<std::uint8_t> observed_;
};

// Equal probability over the feasible actions of every state.
Policy uniform_start_policy(const AugmentedSpace& space);
Policy uniform_start_policy(const FsruInstance& instance,
                            ShiftMode mode = ShiftMode::Flexible);

// Normalizes occupancy rows into a policy; zero-mass rows get the uniform
// distribution over feasible actions. Infeasible cells are ignored.
Policy occupancy_to_policy(const OccupancyMatrix& occupancy);

// Puts mass only on feasible actions, then renormalizes (uniform fallback).
void enforce_feasibility(Policy& policy);

double max_abs_difference(const StateActionTensor& a, const StateActionTensor& b);

// Largest |row sum - 1| over all states plus the largest infeasible entry.
double feasibility_error(const Policy& policy);

// States reachable under some policy and some transition outcome.
std::vector<std::uint8_t> structurally_reachable(const AugmentedSpace& space);

}  // namespace fsru
