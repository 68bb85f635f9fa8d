#pragma once

// Experiment harness: policy evaluation by simulation, train/test method
// comparison against the rigid-shift baseline, best training day per test
// weekday and occupancy distances.

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fsru/augmented.hpp"
#include "fsru/exact_fp.hpp"
#include "fsru/imputation.hpp"
#include "fsru/instance_io.hpp"
#include "fsru/model.hpp"
#include "fsru/sbr.hpp"

namespace fsru {

struct RevenueStats {
  int reps = 0;
  int agents = 0;
  double mean = 0.0;          // mean total revenue per agent
  double std_dev = 0.0;       // per-agent dispersion over all reps
  double pooled_stderr = 0.0; // std_dev / sqrt(reps * agents)
  double rep_stderr = 0.0;    // dispersion of rep means / sqrt(reps); 0 when reps == 1
  std::vector<double> rep_means;
  std::vector<double> revenues;  // every agent of every rep, rep-major
};

// Rep r simulates with seed derive_seed(seed, r).
RevenueStats evaluate_policy(const Policy& policy, const FsruInstance& instance, int reps,
                             std::uint64_t seed, int agents = 0);

std::string stats_json(const RevenueStats& stats);

enum class Solver { ExactFp, Sbr };

struct MethodSpec {
  std::string name;
  Solver solver = Solver::Sbr;
  ShiftMode mode = ShiftMode::Flexible;
  int k = 500;
  ImputerConfig imputer;
  double epsilon = 1e-3;
  int max_iters = 500;
  bool track_exploitability = true;

  static MethodSpec baseline(double epsilon = 1e-3, int max_iters = 500);
};

// JSON object with keys name, solver ("exact-fp" | "sbr"), mode, k, imputer,
// epsilon, max_iters, track_exploitability and the imputer's tuning keys.
// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
MethodSpec method_from_json(const std::string& text);
std::string method_json(const MethodSpec& method);

struct TrainedPolicy {
  Policy policy;
  ConvergenceReport report;
  double seconds = 0.0;
};

TrainedPolicy train_policy(const MethodSpec& method, const FsruInstance& instance,
                           std::uint64_t seed);

struct DayInstance {
  int id = 0;           // day of the month, from 0
  int day_of_week = 0;  // 0 Monday .. 6 Sunday
  FsruInstance instance;

  bool weekend() const { return day_of_week >= 5; }
};

struct MonthConfig {
  int num_zones = 9;
  int horizon = 24;
  int num_agents = 200;
  int days = 28;
  double day_noise = 0.1;  // per-day multiplicative demand jitter, +-
  std::uint64_t seed = 0;
};

// Day d uses the weekday or weekend archetype for weekday d % 7 with demand
// scaled by a per-day factor and its own trip seed.
std::vector<DayInstance> synthetic_month(const MonthConfig& config);

struct ExperimentPlan {
  std::vector<DayInstance> train;
  std::vector<DayInstance> test;
  std::vector<MethodSpec> methods;
  MethodSpec baseline = MethodSpec::baseline();
  int agents = 0;  // 0: each instance's agent count
  int reps = 3;
  std::uint64_t seed = 0;
};

// Week 1 for training and the remaining days for testing.
ExperimentPlan month_plan(const std::vector<DayInstance>& month,
                          std::vector<MethodSpec> methods, int reps, std::uint64_t seed);

// Plan file: {"format": "fsru-plan", "version": 1, ...} with either a
// "month" object (MonthConfig keys) or a "days" list of {id, day_of_week,
// path} entries, optional "train_days"/"test_days" id lists (default: week 1
// against the rest), "methods", "baseline" ({epsilon, max_iters}), "agents",
// "reps" and "seed". Relative paths resolve against base_dir.
ExperimentPlan plan_from_json(const std::string& text, const std::string& base_dir = ".");
ExperimentPlan load_plan(const std::string& path);

// Throws std::invalid_argument on overlapping ids, empty sets or mismatched
// dimensions.
void validate_plan(const ExperimentPlan& plan);

struct ResultCell {
  std::string method;
  int train_day = 0;
  int train_weekday = 0;
  int test_day = 0;
  int test_weekday = 0;
  double mean_revenue = 0.0;
  double stderr_revenue = 0.0;
  double baseline_revenue = 0.0;
  double improvement = 0.0;  // percent; NaN when flagged
  bool flagged = false;      // baseline mean <= 0
};

struct TrainingRecord {
  std::string method;
  int train_day = 0;
  double seconds = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct MethodSummary {
  std::string method;
  int train_day = -1;  // -1 aggregates every training day
  int cells = 0;       // unflagged cells aggregated
  double average = 0.0;
  double best = 0.0;
  double worst = 0.0;
};

struct ResultTable {
  std::vector<ResultCell> cells;
  std::vector<TrainingRecord> training;
  std::vector<MethodSummary> summaries;
};

// Percent improvement over the baseline, or NaN when the baseline is not positive.
double percent_improvement(double method, double baseline);

// Each method and the baseline are trained on every training day. A policy
// trained on a weekday (weekend) is evaluated on every weekday (weekend) test
// day, with the test day's seed shared across methods.
ResultTable compare_methods(const ExperimentPlan& plan);

// Rebuilds the summaries from the cells.
std::vector<MethodSummary> summarize(const std::vector<ResultCell>& cells);

void write_result_csv(std::ostream& out, const ResultTable& table);
std::string result_json(const ResultTable& table);

// Test weekday -> training day with the highest average revenue over the
// test days of that weekday. Ties go to the earlier training day.
std::map<int, int> best_policy_per_day(const ResultTable& table, const std::string& method);

enum class DistanceMetric { MeanAbsolute, JensenShannon };

// Both matrices are normalized to unit mass first. Jensen-Shannon uses the
// natural log. Throws std::invalid_argument on zero mass, negative entries or
// mismatched spaces.
double occupancy_distance(const OccupancyMatrix& a, const OccupancyMatrix& b,
                          DistanceMetric metric);

struct DistancePoint {
  int budget = 0;  // simulated trajectories
  double mad = 0.0;
  double js = 0.0;
  double random_mad = 0.0;
  double random_js = 0.0;
};

// Empirical occupancy of `budget` trajectories of the policy (and of the
// uniform random policy) against the reference occupancy. Trajectories are
// collected from whole simulations of the instance's agents.
std::vector<DistancePoint> distance_vs_simulations(const Policy& policy,
                                                   const FsruInstance& instance,
                                                   const OccupancyMatrix& reference,
                                                   const std::vector<int>& budgets,
                                                   std::uint64_t seed);

void write_distance_csv(std::ostream& out, const std::vector<DistancePoint>& curve);

}  // namespace fsru
