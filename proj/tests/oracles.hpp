#pragma once

// Brute-force references built directly on transition_row / expected_reward,
// with the shift rules written out independently of AugmentedSpace.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <tuple>
#include <vector>

#include "fsru/count_model.hpp"
#include "fsru/model.hpp"

namespace fsru::oracle {

struct Shift {
  int location;
  int n;
  int b;
};

inline bool allowed(const FsruInstance& inst, bool rigid, const Shift& u, int a) {
  const int sink = inst.num_zones;
  if (u.location == sink) {
    if (a == sink) return true;
    if (rigid && u.n > 0) return false;
    return u.n < inst.max_hours;
  }
  if (a != sink) return u.n < inst.max_hours;
  if (u.n == inst.max_hours) return true;
  return !rigid && u.b < inst.max_breaks;
}

inline Shift successor(const FsruInstance& inst, const Shift& u, int a, int landing) {
  const int sink = inst.num_zones;
  if (u.location == sink) return a == sink ? u : Shift{a, u.n, u.b};
  if (a == sink) return {sink, u.n, std::min(u.b + 1, inst.max_breaks)};
  return {landing, u.n + 1, u.b};
}

// Count-model averages of the one-step reward and transition row, with the
// deciding agent added to the i others.
struct Averaged {
  const FsruInstance* inst;
  const CountModel* counts;

  double reward(int t, int s, int a) const {
    if (s == inst->num_zones || a == inst->num_zones) return expected_reward(*inst, t, s, a, 1.0);
    const CountPmf& pmf = counts->at(t, s);
    double total = 0.0;
    for (std::size_t k = 0; k < pmf.probs.size(); ++k) {
      total += pmf.probs[k] * expected_reward(*inst, t, s, a, pmf.offset + static_cast<double>(k) + 1.0);
    }
    return total;
  }
  std::vector<double> row(int t, int s, int a) const {
    if (s == inst->num_zones || a == inst->num_zones) return transition_row(*inst, t, s, a, 1.0);
    const CountPmf& pmf = counts->at(t, s);
    std::vector<double> out(static_cast<std::size_t>(inst->num_locations()), 0.0);
    for (std::size_t k = 0; k < pmf.probs.size(); ++k) {
      const auto r = transition_row(*inst, t, s, a, pmf.offset + static_cast<double>(k) + 1.0);
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += pmf.probs[k] * r[j];
    }
    return out;
  }
};

// Expectimax over the full history tree: the maximum over every
// deterministic (history-dependent) policy, with no state merging.
inline double expectimax(const FsruInstance& inst, const CountModel& counts, bool rigid = false) {
  const Averaged avg{&inst, &counts};
  std::function<double(int, Shift)> value = [&](int t, Shift u) -> double {
    if (t == inst.horizon) return 0.0;
    double best = -INFINITY;
    for (int a = 0; a <= inst.num_zones; ++a) {
      if (!allowed(inst, rigid, u, a)) continue;
      double v = avg.reward(t, u.location, a);
      if (t + 1 < inst.horizon) {
        const auto row = avg.row(t, u.location, a);
        for (int j = 0; j <= inst.num_zones; ++j) {
          if (row[static_cast<std::size_t>(j)] > 0.0) {
            v += row[static_cast<std::size_t>(j)] * value(t + 1, successor(inst, u, a, j));
          }
        }
      }
      best = std::max(best, v);
    }
    return best;
  };
  return value(0, {inst.num_zones, 0, 0});
}

using Key = std::tuple<int, int, int, int>;

// States reachable from the start under any action and outcome, with the
// feasible actions of each.
struct ReachableStates {
  std::vector<Key> states;
  std::map<Key, std::size_t> index;
  std::vector<std::vector<int>> choices;
};

inline ReachableStates reachable_states(const FsruInstance& inst, const CountModel& counts) {
  const Averaged avg{&inst, &counts};
  const int sink = inst.num_zones;
  ReachableStates out;
  std::vector<std::vector<Shift>> layer(static_cast<std::size_t>(inst.horizon));
  layer[0] = {{sink, 0, 0}};
  for (int t = 0; t < inst.horizon; ++t) {
    for (const Shift& u : layer[static_cast<std::size_t>(t)]) {
      const Key key{t, u.location, u.n, u.b};
      if (out.index.count(key)) continue;
      out.index[key] = out.states.size();
      out.states.push_back(key);
      if (t + 1 == inst.horizon) continue;
      for (int a = 0; a <= sink; ++a) {
        if (!allowed(inst, false, u, a)) continue;
        const auto row = avg.row(t, u.location, a);
        for (int j = 0; j <= sink; ++j) {
          if (row[static_cast<std::size_t>(j)] > 0.0) {
            layer[static_cast<std::size_t>(t + 1)].push_back(successor(inst, u, a, j));
          }
        }
      }
    }
  }
  out.choices.resize(out.states.size());
  for (std::size_t k = 0; k < out.states.size(); ++k) {
    const auto [t, s, n, b] = out.states[k];
    for (int a = 0; a <= sink; ++a) {
      if (allowed(inst, false, {s, n, b}, a)) out.choices[k].push_back(a);
    }
  }
  return out;
}

// Number of deterministic Markov policies over the reachable states.
inline double markov_policy_count(const FsruInstance& inst, const CountModel& counts) {
  double total = 1.0;
  for (const auto& c : reachable_states(inst, counts).choices) total *= static_cast<double>(c.size());
  return total;
}

// Enumerates every deterministic Markov policy over the states reachable
// from the start and returns the best value. Only for tiny instances.
inline double markov_enumeration(const FsruInstance& inst, const CountModel& counts) {
  const Averaged avg{&inst, &counts};
  const int sink = inst.num_zones;
  const auto [states, index, choices] = reachable_states(inst, counts);
  std::vector<std::size_t> pick(states.size(), 0);
  double best = -INFINITY;
  while (true) {
    // Forward evaluation of the current deterministic policy.
    std::map<Key, double> mass{{Key{0, sink, 0, 0}, 1.0}};
    double v = 0.0;
    for (int t = 0; t < inst.horizon; ++t) {
      std::map<Key, double> next;
      for (const auto& [key, m] : mass) {
        if (std::get<0>(key) != t) continue;
        const std::size_t k = index.at(key);
        const int a = choices[k][pick[k]];
        const int s = std::get<1>(key);
        v += m * avg.reward(t, s, a);
        if (t + 1 == inst.horizon) continue;
        const auto row = avg.row(t, s, a);
        const Shift u{s, std::get<2>(key), std::get<3>(key)};
        for (int j = 0; j <= sink; ++j) {
          if (row[static_cast<std::size_t>(j)] > 0.0) {
            const Shift w = successor(inst, u, a, j);
            next[Key{t + 1, w.location, w.n, w.b}] += m * row[static_cast<std::size_t>(j)];
          }
        }
      }
      for (const auto& [key, m] : next) mass[key] += m;
    }
    best = std::max(best, v);
    std::size_t k = 0;
    while (k < pick.size() && ++pick[k] == choices[k].size()) pick[k++] = 0;
    if (k == pick.size()) break;
  }
  return best;
}

}  // namespace fsru::oracle
