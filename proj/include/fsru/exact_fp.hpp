#pragma once

// Fictitious play with an exact best response. The best response is the
// finite-horizon MDP over augmented states obtained by fixing the count model
// of the other agents; it is solved by backward induction instead of a linear
// program, followed by a forward pass for its occupancy.

#include <functional>
#include <vector>

#include "fsru/augmented.hpp"
#include "fsru/count_model.hpp"
#include "fsru/model.hpp"

namespace fsru {

struct BestResponse {
  OccupancyMatrix occupancy;
  Policy policy;  // deterministic greedy policy, lowest action index on ties
  double value = 0.0;
};

BestResponse exact_best_response(const CountModel& counts, const FsruInstance& instance,
                                 ShiftMode mode = ShiftMode::Flexible);

// Best response against an already-expected kernel.
BestResponse exact_best_response(const SingleAgentModel& model, ShiftMode mode);

// Best-response value minus the policy's own value, both against the count
// model generated by the policy itself.
double exploitability(const Policy& policy, const FsruInstance& instance);

struct ConvergenceReport {
  bool converged = false;
  int iterations = 0;       // best responses computed
  int best_iteration = 0;   // iteration whose policy was returned
  double final_delta = 0.0;
  std::vector<double> delta_history;
  // Exploitability of the policy each best response was computed against.
  std::vector<double> exploitability_history;
  double seconds = 0.0;  // wall clock, excluded from equality

  bool same_trajectory(const ConvergenceReport& other) const {
    return converged == other.converged && iterations == other.iterations &&
           best_iteration == other.best_iteration &&
           final_delta == other.final_delta &&
           delta_history == other.delta_history &&
           exploitability_history == other.exploitability_history;
  }
};

struct FpIteration {
  int iteration = 0;
  const OccupancyMatrix* best_response = nullptr;
  const OccupancyMatrix* average = nullptr;
  const Policy* policy = nullptr;
  double delta = 0.0;
};

struct FpConfig {
  double epsilon = 1e-3;  // max-norm policy change
  int max_iters = 500;
  ShiftMode mode = ShiftMode::Flexible;
  std::function<void(const FpIteration&)> observer;
};

struct FpResult {
  Policy policy;
  OccupancyMatrix occupancy;  // running average occupancy
  ConvergenceReport report;
};

// When not converged, the iterate with the lowest exploitability is returned.
FpResult run_fp(const FsruInstance& instance, const FpConfig& config = {});

}  // namespace fsru
