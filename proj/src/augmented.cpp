#include "fsru/augmented.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fsru {

AugmentedSpace::AugmentedSpace(int num_zones, int horizon, int max_hours,
                               int max_breaks, ShiftMode mode)
    : num_zones_(num_zones),
      horizon_(horizon),
      max_hours_(max_hours),
      max_breaks_(max_breaks),
      mode_(mode) {
  if (num_zones < 1 || horizon < 1) {
    throw std::invalid_argument("augmented space needs at least one zone and one step");
  }
  if (max_hours < 1) {
    throw std::invalid_argument("max_hours must be at least 1");
  }
  if (max_breaks < 0) throw std::invalid_argument("max_breaks must be non-negative");
}

AugmentedSpace AugmentedSpace::of(const FsruInstance& instance, ShiftMode mode) {
  return AugmentedSpace(instance.num_zones, instance.horizon, instance.max_hours,
                        instance.max_breaks, mode);
}

std::pair<int, AugmentedState> AugmentedSpace::decode(std::size_t state) const {
  AugmentedState u;
  const auto nb = static_cast<std::size_t>(max_breaks_ + 1);
  const auto nh = static_cast<std::size_t>(max_hours_ + 1);
  const auto nl = static_cast<std::size_t>(num_locations());
  u.breaks_taken = static_cast<int>(state % nb);
  state /= nb;
  u.hours_served = static_cast<int>(state % nh);
  state /= nh;
  u.location = static_cast<Location>(state % nl);
  return {static_cast<int>(state / nl), u};
}

bool AugmentedSpace::feasible(const AugmentedState& u, Action a) const {
  const bool budget_left = u.hours_served < max_hours_;
  if (u.location == sink()) {
    if (a == sink_action()) return true;
    if (mode_ == ShiftMode::Rigid && u.hours_served > 0) return false;
    return budget_left;
  }
  if (a != sink_action()) return budget_left;
  if (!budget_left) return true;
  return mode_ == ShiftMode::Flexible && u.breaks_taken < max_breaks_;
}

int AugmentedSpace::feasible_count(const AugmentedState& u) const {
  int count = 0;
  for (Action a = 0; a < num_actions(); ++a) count += feasible(u, a) ? 1 : 0;
  return count;
}

AugmentedState AugmentedSpace::after(const AugmentedState& u, Action a,
                                     Location landing) const {
  if (u.location == sink()) {
    if (a == sink_action()) return u;
    return {a, u.hours_served, u.breaks_taken};
  }
  if (a == sink_action()) {
    return {sink(), u.hours_served, std::min(u.breaks_taken + 1, max_breaks_)};
  }
  return {landing, u.hours_served + 1, u.breaks_taken};
}

Policy uniform_start_policy(const AugmentedSpace& space) {
  Policy policy(space);
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    const auto u = space.decode(s).second;
    const double p = 1.0 / space.feasible_count(u);
    auto row = policy.row(s);
    for (Action a = 0; a < space.num_actions(); ++a) {
      row[static_cast<std::size_t>(a)] = space.feasible(u, a) ? p : 0.0;
    }
  }
  return policy;
}

Policy uniform_start_policy(const FsruInstance& instance, ShiftMode mode) {
  return uniform_start_policy(AugmentedSpace::of(instance, mode));
}

namespace {

void normalize_row(const AugmentedSpace& space, const AugmentedState& u,
                   std::span<double> row) {
  double total = 0.0;
  for (Action a = 0; a < space.num_actions(); ++a) {
    auto& v = row[static_cast<std::size_t>(a)];
    if (!space.feasible(u, a) || !(v > 0.0)) v = 0.0;
    total += v;
  }
  if (total > 0.0) {
    for (auto& v : row) v /= total;
    return;
  }
  const double p = 1.0 / space.feasible_count(u);
  for (Action a = 0; a < space.num_actions(); ++a) {
    row[static_cast<std::size_t>(a)] = space.feasible(u, a) ? p : 0.0;
  }
}

}  // namespace

Policy occupancy_to_policy(const OccupancyMatrix& occupancy) {
  const auto& space = occupancy.space();
  Policy policy(space);
  policy.values() = occupancy.values();
  if (occupancy.has_mask()) {
    for (std::size_t c = 0; c < policy.values().size(); ++c) {
      if (!occupancy.observed(c)) policy.values()[c] = 0.0;
    }
  }
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    normalize_row(space, space.decode(s).second, policy.row(s));
  }
  return policy;
}

void enforce_feasibility(Policy& policy) {
  const auto& space = policy.space();
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    normalize_row(space, space.decode(s).second, policy.row(s));
  }
}

double max_abs_difference(const StateActionTensor& a, const StateActionTensor& b) {
  if (a.values().size() != b.values().size()) {
    throw std::invalid_argument("tensor shapes differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

double feasibility_error(const Policy& policy) {
  const auto& space = policy.space();
  double worst = 0.0;
  for (std::size_t s = 0; s < space.num_states(); ++s) {
    const auto u = space.decode(s).second;
    const auto row = policy.row(s);
    double total = 0.0;
    for (Action a = 0; a < space.num_actions(); ++a) {
      const double p = row[static_cast<std::size_t>(a)];
      if (!(p >= 0.0)) return INFINITY;
      if (space.feasible(u, a)) {
        total += p;
      } else {
        worst = std::max(worst, p);
      }
    }
    worst = std::max(worst, std::abs(total - 1.0));
  }
  return worst;
}

std::vector<std::uint8_t> structurally_reachable(const AugmentedSpace& space) {
  std::vector<std::uint8_t> reach(space.num_states(), 0);
  reach[space.state_index(0, {space.sink(), 0, 0})] = 1;
  for (int t = 0; t + 1 < space.horizon(); ++t) {
    const std::size_t begin = static_cast<std::size_t>(t) * space.states_per_step();
    for (std::size_t s = begin; s < begin + space.states_per_step(); ++s) {
      if (!reach[s]) continue;
      const auto u = space.decode(s).second;
      bool landed = false;
      for (Action a = 0; a < space.num_actions(); ++a) {
        if (!space.feasible(u, a)) continue;
        if (u.location == space.sink() || a == space.sink_action()) {
          reach[space.state_index(t + 1, space.after(u, a, a))] = 1;
          continue;
        }
        // Every zone action from a zone can land in any zone.
        if (landed) continue;
        landed = true;
        for (Location next = 0; next < space.num_zones(); ++next) {
          reach[space.state_index(t + 1, space.after(u, a, next))] = 1;
        }
      }
    }
  }
  return reach;
}

}  // namespace fsru
