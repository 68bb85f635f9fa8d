// Acceptance checks. Prints one PASS/FAIL line per criterion. With
// arguments, only the listed criteria run.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "fsru/count_model.hpp"
#include "fsru/eval.hpp"
#include "fsru/exact_fp.hpp"
#include "fsru/imputation.hpp"
#include "fsru/instance_io.hpp"
#include "fsru/model.hpp"
#include "fsru/parallel.hpp"
#include "fsru/sbr.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fsru {
namespace {

// Tolerances and budgets.
constexpr double kExampleTolerance = 1e-12;
constexpr int kStochasticQueries = 10000;
constexpr double kRowSumTolerance = 1e-9;
constexpr int kOracleInstances = 20;
constexpr double kOracleTolerance = 1e-9;
constexpr double kOracleSeconds = 60.0;
constexpr double kEnumerationLimit = 2e5;
constexpr int kSamplingConfigs = 10;
constexpr int kSamples = 1000000;
constexpr double kStandardErrors = 3.0;
constexpr double kFpEpsilon = 1e-3;
constexpr int kFpIterations = 500;
constexpr double kExploitabilityShare = 0.05;
constexpr double kSbrRevenueGap = 0.05;
constexpr int kSbrK = 50;
constexpr int kEvaluationReps = 20;
constexpr double kImputationSeconds = 10.0;
constexpr double kMfRmse = 1e-3;
constexpr double kMiceTolerance = 1e-6;
constexpr int kAllowedInversions = 1;
constexpr double kStepSeconds = 60.0;
constexpr double kRunSeconds = 600.0;
constexpr int kFullScaleK = 500;

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point start) {
  return std::chrono::duration<double>(clock_type::now() - start).count();
}

std::string format(const char* fmt, ...) {
  char buf[1024];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof buf, fmt, args);
  va_end(args);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

double self_value(const Policy& policy, const FsruInstance& inst) {
  const auto counts = agent_count_probability(policy, inst, inst.num_agents - 1);
  return policy_value(policy, SingleAgentModel(inst, expected_kernel(counts, inst)));
}

Policy random_policy(const FsruInstance& inst, SplitMix64& rng) {
  Policy p(AugmentedSpace::of(inst));
  for (auto& v : p.values()) v = rng.uniform();
  enforce_feasibility(p);
  return p;
}

Outcome example_golden() {
  const FsruInstance inst = example_instance();
  const StateDistribution d{{1.0, 1.0, 4.0, 0.0}};
  const double m0[4][4] = {{0.0, 0.5, 0.5, 0.0},
                           {0.0, 0.5, 0.5, 0.0},
                           {0.0, 0.5, 0.5, 0.0},
                           {0.0, 0.0, 0.0, 1.0}};
  const double m2[4][4] = {{0.75, 0.25, 0.0, 0.0},
                           {0.25, 0.75, 0.0, 0.0},
                           {0.25, 0.25, 0.5, 0.0},
                           {0.0, 0.0, 0.0, 1.0}};
  const double r[4][4] = {{1.0, 1.0, 1.0, 0.0},
                          {1.0, 1.0, 1.0, 0.0},
                          {0.5, 0.5, 0.5, 0.0},
                          {0.0, 0.0, 0.0, 0.0}};
  double worst = 0.0;
  for (int a = 0; a < 4; ++a) {
    const auto r0 = transition_row(inst, 0, 0, a, d);
    const auto r2 = transition_row(inst, 0, 2, a, d);
    for (int j = 0; j < 4; ++j) {
      worst = std::max(worst, std::abs(r0[j] - m0[a][j]));
      worst = std::max(worst, std::abs(r2[j] - m2[a][j]));
    }
  }
  for (int s = 0; s < 4; ++s) {
    for (int a = 0; a < 4; ++a) worst = std::max(worst, std::abs(expected_reward(inst, 0, s, a, d) - r[s][a]));
  }
  const double t222 = transition_row(inst, 0, 2, 2, d)[2];
  const bool congested = classify(inst, 0, 2, 2, d) == Regime::Congested;
  return {worst <= kExampleTolerance && std::abs(t222 - 0.5) <= kExampleTolerance && congested,
          format("max error %.3g, T(s2,s2,s2)=%.17g", worst, t222)};
}

Outcome row_stochasticity() {
  SplitMix64 rng(101);
  double worst = 0.0;
  int negative = 0;
  for (int q = 0; q < kStochasticQueries; ++q) {
    const int z = 1 + static_cast<int>(rng() % 6);
    const int h = 1 + static_cast<int>(rng() % 4);
    const FsruInstance inst = testing::random_instance(rng(), z, h, 20, 3, 1, 1.0 + 9.0 * rng.uniform());
    const int t = static_cast<int>(rng() % static_cast<std::uint64_t>(h));
    const int s = static_cast<int>(rng() % static_cast<std::uint64_t>(z + 1));
    const int a = static_cast<int>(rng() % static_cast<std::uint64_t>(z + 1));
    StateDistribution d;
    for (int j = 0; j <= z; ++j) d.counts.push_back(rng.uniform() < 0.2 ? 0.0 : 20.0 * rng.uniform());
    if (s < z && d.counts[static_cast<std::size_t>(s)] <= 0.0) d.counts[static_cast<std::size_t>(s)] = 0.5;
    const auto row = transition_row(inst, t, s, a, d);
    worst = std::max(worst, std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0));
    for (const double p : row) negative += p < 0.0 ? 1 : 0;
  }
  return {worst <= kRowSumTolerance && negative == 0,
          format("%d queries, max |sum - 1| %.3g, negative entries %d", kStochasticQueries, worst, negative)};
}

Outcome oracle_equivalence() {
  const auto start = clock_type::now();
  SplitMix64 rng(303);
  double worst = 0.0;
  int enumerated = 0;
  for (int q = 0; q < kOracleInstances; ++q) {
    const int z = 1 + static_cast<int>(rng() % 3);
    const int h = 1 + static_cast<int>(rng() % 4);
    const int delta = 1 + static_cast<int>(rng() % 3);
    const int b = static_cast<int>(rng() % 2);
    const int n = 1 + static_cast<int>(rng() % 8);
    const FsruInstance inst = testing::random_instance(rng(), z, h, n, delta, b);
    const auto counts = agent_count_probability(random_policy(inst, rng), inst, n - 1);
    const double value = exact_best_response(counts, inst).value;
    worst = std::max(worst, std::abs(value - oracle::expectimax(inst, counts)));
    if (oracle::markov_policy_count(inst, counts) <= kEnumerationLimit) {
      worst = std::max(worst, std::abs(value - oracle::markov_enumeration(inst, counts)));
      ++enumerated;
    }
  }
  const double elapsed = seconds_since(start);
  return {worst <= kOracleTolerance && elapsed < kOracleSeconds,
          format("%d instances (%d also by policy enumeration), max error %.3g, %.1f s",
                 kOracleInstances, enumerated, worst, elapsed)};
}

Outcome monte_carlo() {
  SplitMix64 pick(404);
  int checks = 0, failures = 0;
  double worst_z = 0.0;
  for (int c = 0; c < kSamplingConfigs; ++c) {
    const int z = 2 + static_cast<int>(pick() % 3);
    const FsruInstance inst = testing::random_instance(pick(), z, 2, 30, 3, 1, 6.0);
    const int t = static_cast<int>(pick() % 2);
    int s = static_cast<int>(pick() % static_cast<std::uint64_t>(z));
    int a = static_cast<int>(pick() % static_cast<std::uint64_t>(z));
    while (inst.demand(t, s) <= 0.0) s = (s + 1) % z;
    if (c == 8) a = z;  // sink action
    if (c == 9) s = z;  // sink state
    StateDistribution d;
    for (int j = 0; j <= z; ++j) d.counts.push_back(1.0 + 5.0 * pick.uniform());
    if (s < z) {
      // Alternate between congested and unconstrained zones.
      const double demand = inst.demand(t, s);
      d.counts[static_cast<std::size_t>(s)] = c % 2 == 0 ? demand * (1.5 + pick.uniform()) : demand * 0.5;
    }
    const auto row = transition_row(inst, t, s, a, d);
    const double mean = expected_reward(inst, t, s, a, d);
    SplitMix64 rng(derive_seed(505, static_cast<std::uint64_t>(c)));
    std::vector<double> freq(row.size(), 0.0);
    double total = 0.0, total_sq = 0.0;
    for (int i = 0; i < kSamples; ++i) {
      const Move m = sample_transition(inst, t, s, a, d, rng);
      freq[static_cast<std::size_t>(m.next)] += 1.0;
      total += m.reward;
      total_sq += m.reward * m.reward;
    }
    auto check = [&](double observed, double expected, double se) {
      ++checks;
      const double err = std::abs(observed - expected);
      if (se > 0.0) worst_z = std::max(worst_z, err / se);
      if (se > 0.0 ? err > kStandardErrors * se : err > 1e-12) ++failures;
    };
    for (std::size_t j = 0; j < row.size(); ++j) {
      check(freq[j] / kSamples, row[j], std::sqrt(row[j] * (1.0 - row[j]) / kSamples));
    }
    const double m = total / kSamples;
    check(m, mean, std::sqrt(std::max(0.0, total_sq / kSamples - m * m) / kSamples));
  }
  return {failures == 0, format("%d configurations, %d checks at %d samples, %d outside %.0f s.e., largest %.2f s.e.",
                                kSamplingConfigs, checks, kSamples, failures, kStandardErrors, worst_z)};
}

Outcome fp_convergence() {
  const FsruInstance inst = example_instance(4, 6, 4, 0);
  FpConfig config;
  config.epsilon = kFpEpsilon;
  config.max_iters = kFpIterations;
  const auto fp = run_fp(inst, config);
  const double value = self_value(fp.policy, inst);
  const double gap = exploitability(fp.policy, inst);
  const bool small_gap = gap <= kExploitabilityShare * value;
  return {fp.report.converged && small_gap,
          format("converged=%s after %d iterations (final delta %.3g), exploitability %.3g = %.2f%% of value %.4f",
                 fp.report.converged ? "yes" : "no", fp.report.iterations, fp.report.final_delta, gap,
                 100.0 * gap / value, value)};
}

FsruInstance cross_check_instance() { return generate_synthetic(weekday_config(3, 6, 200, 0)).instance; }

const FpResult& supervised_sbr(const FsruInstance& inst) {
  static std::optional<FpResult> cached;
  if (!cached) {
    SbrConfig config;
    config.k = kSbrK;
    config.imputer.method = "supervised";
    cached = run_sbr(inst, config);
  }
  return *cached;
}

Outcome sbr_cross_validation() {
  const FsruInstance inst = cross_check_instance();
  FpConfig fp_config;
  fp_config.max_iters = 5000;
  const auto fp = run_fp(inst, fp_config);
  const auto& sbr = supervised_sbr(inst);
  const double v_fp = evaluate_policy(fp.policy, inst, kEvaluationReps, 66).mean;
  const double v_sbr = evaluate_policy(sbr.policy, inst, kEvaluationReps, 66).mean;
  const double rel = (v_sbr - v_fp) / v_fp;

  // Ablated run: every best response stays inside the support of the
  // policy it responds to.
  SbrConfig ablated;
  ablated.k = kSbrK;
  ablated.imputer.method = "none";
  Policy previous = uniform_start_policy(inst);
  const auto reachable = structurally_reachable(previous.space());
  const std::size_t actions = static_cast<std::size_t>(previous.space().num_actions());
  long violations = 0, dropped = 0;
  int iterations = 0;
  ablated.observer = [&](const FpIteration& it) {
    const auto& response = it.best_response->values();
    for (std::size_t s = 0; s < reachable.size(); ++s) {
      if (!reachable[s]) continue;
      double mass = 0.0;
      for (std::size_t a = 0; a < actions; ++a) mass += response[s * actions + a];
      for (std::size_t a = 0; a < actions; ++a) {
        const std::size_t c = s * actions + a;
        if (previous.values()[c] == 0.0 && response[c] > 0.0) ++violations;
        if (mass > 0.0 && previous.values()[c] > 0.0 && response[c] == 0.0) ++dropped;
      }
    }
    previous = *it.policy;
    ++iterations;
  };
  run_sbr(inst, ablated);
  const bool close = std::abs(rel) <= kSbrRevenueGap;
  return {close && violations == 0 && iterations > 0 && dropped > 0,
          format("exact-fp %.4f (converged=%s, %d it), sbr supervised %.4f (converged=%s, %d it): %+.2f%%; "
                 "ablated: %d iterations, %ld support violations, %ld dropped cells",
                 v_fp, fp.report.converged ? "yes" : "no", fp.report.iterations, v_sbr,
                 sbr.report.converged ? "yes" : "no", sbr.report.iterations, 100.0 * rel, iterations,
                 violations, dropped)};
}

ImputationProblem masked(const Eigen::MatrixXd& truth, const MissingMask& observed) {
  ImputationProblem p;
  p.data = observed.select(truth, std::numeric_limits<double>::quiet_NaN());
  p.observed = observed;
  p.feature.assign(static_cast<std::size_t>(truth.cols()), false);
  return p;
}

Outcome imputation_benchmarks() {
  std::string detail;
  bool pass = true;
  auto timed = [&](const char* name, const std::function<bool(std::string&)>& body) {
    const auto start = clock_type::now();
    std::string note;
    const bool ok = body(note);
    const double elapsed = seconds_since(start);
    pass = pass && ok && elapsed < kImputationSeconds;
    detail += format("%s%s %s (%s, %.2f s)", detail.empty() ? "" : "; ", name, ok ? "ok" : "bad",
                     note.c_str(), elapsed);
  };
  timed("mf", [](std::string& note) {
    SplitMix64 rng(7);
    const Eigen::Index n = 60, m = 12;
    Eigen::VectorXd u(n), v(m);
    for (Eigen::Index i = 0; i < n; ++i) u(i) = 0.5 + rng.uniform();
    for (Eigen::Index j = 0; j < m; ++j) v(j) = 0.5 + rng.uniform();
    const Eigen::MatrixXd truth = u * v.transpose();
    const double top = truth.maxCoeff();
    MissingMask obs(n, m);
    for (Eigen::Index j = 0; j < m; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) obs(i, j) = rng.uniform() >= 0.6 * truth(i, j) / top;
    }
    for (Eigen::Index i = 0; i < n; ++i) obs(i, i % m) = true;
    const double frac = 1.0 - static_cast<double>(obs.count()) / static_cast<double>(obs.size());
    ImputerConfig c;
    c.method = "mf";
    c.rank = 1;
    const double rmse = masked_rmse(impute(masked(truth, obs), c).values, truth, !obs);
    note = format("%.0f%% missing, rmse %.3g", 100.0 * frac, rmse);
    return rmse < kMfRmse && frac > 0.25 && frac < 0.35;
  });
  timed("missforest", [](std::string& note) {
    SplitMix64 rng(11);
    const double levels[4] = {0.0, 5.0, 1.0, 3.0};
    const Eigen::Index n = 300;
    Eigen::MatrixXd x(n, 2);
    MissingMask obs = MissingMask::Constant(n, 2, true);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform();
      x(i, 1) = levels[static_cast<int>(x(i, 0) * 4.0)];
    }
    for (Eigen::Index i = 0; i < n; ++i) obs(i, 1) = rng.uniform() >= 0.3;
    const auto p = masked(x, obs);
    ImputerConfig c;
    c.method = "missforest";
    c.seed = 5;
    const double rf = masked_rmse(impute(p, c).values, x, !obs);
    const double mean = masked_rmse(impute_mean(p).values, x, !obs);
    note = format("rmse %.3g vs mean %.3g", rf, mean);
    return rf < mean;
  });
  timed("mice", [](std::string& note) {
    SplitMix64 rng(5);
    const Eigen::Index n = 40;
    Eigen::MatrixXd x(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      x(i, 0) = rng.uniform() * 10.0;
      x(i, 1) = 3.0 * x(i, 0) - 2.0;
      x(i, 2) = -0.5 * x(i, 0) + 4.0;
    }
    MissingMask obs = MissingMask::Constant(n, 3, true);
    for (Eigen::Index i = 0; i < n; i += 2) obs(i, 1) = false;
    for (Eigen::Index i = 1; i < n; i += 3) obs(i, 2) = false;
    ImputerConfig c;
    c.method = "mice";
    const double err = (impute(masked(x, obs), c).values - x).cwiseAbs().maxCoeff();
    note = format("max error %.3g", err);
    return err <= kMiceTolerance;
  });
  timed("supervised", [](std::string& note) {
    SplitMix64 rng(13);
    const Eigen::Index n = 50, m = 8;
    Eigen::MatrixXd data(n, m), ref(n, m);
    MissingMask obs(n, m);
    for (Eigen::Index i = 0; i < data.size(); ++i) {
      data(i) = rng.uniform();
      ref(i) = rng.uniform();
      obs(i) = rng.uniform() < 0.5;
    }
    ImputerConfig c;
    c.method = "supervised";
    c.reference = [&](Eigen::Index i, Eigen::Index j) { return ref(i, j); };
    const auto r = impute(masked(data, obs), c);
    int wrong = 0;
    for (Eigen::Index i = 0; i < data.size(); ++i) wrong += r.values(i) != (obs(i) ? data(i) : ref(i));
    note = format("%d cells differ", wrong);
    return wrong == 0;
  });
  return {pass, detail};
}

int inversions(const std::vector<double>& curve) {
  int count = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) count += curve[i] > curve[i - 1] ? 1 : 0;
  return count;
}

Outcome distance_property() {
  const FsruInstance inst = cross_check_instance();
  const auto& sbr = supervised_sbr(inst);
  const auto& space = sbr.policy.space();
  const Simulation sim = simulate(sbr.policy, inst, 808);
  const OccupancyMatrix reference = top_k_weighted_path(sim.trajectories, kSbrK, space);
  const std::vector<int> budgets = {25, 50, 100, 200, 400, 800, 1600, 3200};
  const auto curve = distance_vs_simulations(sbr.policy, inst, reference, budgets, 909);
  std::vector<double> mad, js;
  for (const auto& pt : curve) {
    mad.push_back(pt.mad);
    js.push_back(pt.js);
  }
  const auto& last = curve.back();
  const bool below = last.mad < last.random_mad && last.js < last.random_js;
  const int inv_mad = inversions(mad), inv_js = inversions(js);
  // Context only: the same curve against the policy's analytic occupancy.
  const auto counts = agent_count_probability(sbr.policy, inst, inst.num_agents - 1);
  const OccupancyMatrix analytic =
      policy_occupancy(sbr.policy, SingleAgentModel(inst, expected_kernel(counts, inst)));
  std::vector<double> analytic_mad;
  for (const auto& pt : distance_vs_simulations(sbr.policy, inst, analytic, budgets, 909)) {
    analytic_mad.push_back(pt.mad);
  }
  return {below && inv_mad <= kAllowedInversions && inv_js <= kAllowedInversions && sbr.report.converged,
          format("sbr converged=%s; at %d trajectories mad %.4g vs random %.4g, js %.4g vs random %.4g; "
                 "inversions mad %d, js %d (mad %.4g -> %.4g); against the analytic occupancy mad "
                 "%.4g -> %.4g with %d inversions",
                 sbr.report.converged ? "yes" : "no", last.budget, last.mad, last.random_mad, last.js,
                 last.random_js, inv_mad, inv_js, mad.front(), mad.back(), analytic_mad.front(),
                 analytic_mad.back(), inversions(analytic_mad))};
}

struct BudgetExceeded {};

Outcome scale_and_sign() {
  SynthConfig full;  // 100 zones, 48 steps, 20000 agents, 20 hours, 2 breaks
  full.seed = 1;
  const FsruInstance inst = generate_synthetic(full).instance;

  SbrStepConfig step;
  step.k = kFullScaleK;
  step.imputer.method = "supervised";
  auto start = clock_type::now();
  const auto one = sbr_step(uniform_start_policy(inst), inst, step, 1);
  const double step_seconds = seconds_since(start);

  SbrConfig run;
  run.k = kFullScaleK;
  run.imputer.method = "supervised";
  int iterations = 0;
  double last_delta = 0.0;
  start = clock_type::now();
  run.observer = [&](const FpIteration& it) {
    iterations = it.iteration;
    last_delta = it.delta;
    if (seconds_since(start) > kRunSeconds) throw BudgetExceeded{};
  };
  bool finished = true;
  bool converged = false;
  try {
    converged = run_sbr(inst, run).report.converged;
  } catch (const BudgetExceeded&) {
    finished = false;
  }
  const double run_seconds = seconds_since(start);

  // Weekday plan: week-one Monday and Wednesday train, weekdays of weeks 2-4 test.
  const auto month = synthetic_month(MonthConfig{});
  ExperimentPlan plan;
  for (const auto& d : month) {
    if (d.weekend()) continue;
    if (d.id == 0 || d.id == 2) plan.train.push_back(d);
    if (d.id >= 7) plan.test.push_back(d);
  }
  MethodSpec sbr;
  sbr.name = "sbr-missforest";
  sbr.k = kSbrK;
  sbr.imputer.method = "missforest";
  plan.methods = {sbr};
  plan.reps = 3;
  plan.seed = 12;
  const auto table = compare_methods(plan);
  double sum = 0.0;
  int cells = 0;
  for (const auto& c : table.cells) {
    if (c.method != sbr.name || c.flagged) continue;
    sum += c.improvement;
    ++cells;
  }
  const double average = cells > 0 ? sum / cells : std::nan("");

  const bool pass = step_seconds < kStepSeconds && finished && run_seconds < kRunSeconds && average >= 0.0;
  return {pass, format("%u thread(s); full-scale sbr_step %.1f s (%zu observed rows); run_sbr %s after %d "
                       "iterations in %.0f s (last delta %.3g, converged=%s); weekday plan sbr-missforest vs rigid "
                       "baseline %+.2f%% over %d cells",
                       thread_count(), step_seconds, one.observed_rows,
                       finished ? "finished" : "stopped at the time limit", iterations, run_seconds,
                       last_delta, converged ? "yes" : "no", average, cells)};
}

struct Criterion {
  int id;
  const char* name;
  Outcome (*run)();
};

const Criterion kCriteria[] = {
    {1, "example golden values", example_golden},
    {2, "row stochasticity sweep", row_stochasticity},
    {3, "best-response oracle equivalence", oracle_equivalence},
    {4, "Monte Carlo consistency", monte_carlo},
    {5, "FP convergence", fp_convergence},
    {6, "SBR cross-validation", sbr_cross_validation},
    {7, "imputation micro-benchmarks", imputation_benchmarks},
    {8, "occupancy-distance property", distance_property},
    {9, "scale and run time", scale_and_sign},
};

}  // namespace
}  // namespace fsru

int main(int argc, char** argv) {
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  bool all = true;
  for (const auto& c : fsru::kCriteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = fsru::clock_type::now();
    fsru::Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %s: %s (%.1f s) %s\n", c.id, c.name, out.pass ? "PASS" : "FAIL",
                fsru::seconds_since(start), out.detail.c_str());
    std::fflush(stdout);
    all = all && out.pass;
  }
  return all ? 0 : 1;
}
