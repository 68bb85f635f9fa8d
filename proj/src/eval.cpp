#include "fsru/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>
#include <stdexcept>

#include "fsru/parallel.hpp"
#include "fsru/rng.hpp"

namespace fsru {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Evaluation seeds live in their own stream family, apart from training.
constexpr std::uint64_t kEvaluationStream = 0x6576616c;

double quantile(std::vector<double> sorted_values, double q) {
  if (sorted_values.empty()) return kNaN;
  const double pos = q * static_cast<double>(sorted_values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = static_cast<std::size_t>(std::ceil(pos));
  return sorted_values[lo] + (pos - static_cast<double>(lo)) * (sorted_values[hi] - sorted_values[lo]);
}

const char* solver_name(Solver s) { return s == Solver::ExactFp ? "exact-fp" : "sbr"; }
const char* mode_name(ShiftMode m) { return m == ShiftMode::Rigid ? "rigid" : "flexible"; }

FsruInstance with_agents(FsruInstance instance, int agents) {
  if (agents > 0) instance.num_agents = agents;
  return instance;
}

}  // namespace

RevenueStats evaluate_policy(const Policy& policy, const FsruInstance& instance, int reps,
                             std::uint64_t seed, int agents) {
  if (reps < 1) throw std::invalid_argument("evaluate_policy: reps must be at least 1");
  RevenueStats stats;
  stats.reps = reps;
  stats.agents = agents > 0 ? agents : instance.num_agents;
  stats.revenues.reserve(static_cast<std::size_t>(reps) * static_cast<std::size_t>(stats.agents));
  for (int r = 0; r < reps; ++r) {
    const std::vector<double> rev =
        simulate_revenues(policy, instance, derive_seed(seed, static_cast<std::uint64_t>(r)),
                          stats.agents);
    stats.rep_means.push_back(std::accumulate(rev.begin(), rev.end(), 0.0) /
                              static_cast<double>(rev.size()));
    stats.revenues.insert(stats.revenues.end(), rev.begin(), rev.end());
  }
  const double n = static_cast<double>(stats.revenues.size());
  stats.mean = std::accumulate(stats.revenues.begin(), stats.revenues.end(), 0.0) / n;
  double ss = 0.0;
  for (const double v : stats.revenues) ss += (v - stats.mean) * (v - stats.mean);
  stats.std_dev = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  stats.pooled_stderr = stats.std_dev / std::sqrt(n);
  if (reps > 1) {
    double rs = 0.0;
    for (const double m : stats.rep_means) rs += (m - stats.mean) * (m - stats.mean);
    stats.rep_stderr = std::sqrt(rs / (reps - 1)) / std::sqrt(static_cast<double>(reps));
  }
  return stats;
}

std::string stats_json(const RevenueStats& stats) {
  std::vector<double> sorted = stats.revenues;
  std::sort(sorted.begin(), sorted.end());
  json out = {{"format", "fsru-stats"},
              {"version", kFileVersion},
              {"reps", stats.reps},
              {"agents", stats.agents},
              {"mean", stats.mean},
              {"std_dev", stats.std_dev},
              {"pooled_stderr", stats.pooled_stderr},
              {"rep_stderr", stats.rep_stderr},
              {"rep_means", stats.rep_means},
              {"distribution",
               {{"min", quantile(sorted, 0.0)},
                {"p25", quantile(sorted, 0.25)},
                {"median", quantile(sorted, 0.5)},
                {"p75", quantile(sorted, 0.75)},
                {"max", quantile(sorted, 1.0)}}}};
  return out.dump(2);
}

MethodSpec MethodSpec::baseline(double epsilon, int max_iters) {
  MethodSpec m;
  m.name = "baseline";
  m.solver = Solver::ExactFp;
  m.mode = ShiftMode::Rigid;
  m.epsilon = epsilon;
  m.max_iters = max_iters;
  return m;
}

namespace {

template <typename T>
T get_as(const json& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("field '") + key + "' has the wrong type");
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const char* what) {
  if (!obj.is_object()) throw std::invalid_argument(std::string(what) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (!known.count(key)) {
      throw std::invalid_argument(std::string(what) + ": unknown field '" + key + "'");
    }
  }
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("malformed JSON: ") + e.what());
  }
}

ShiftMode parse_mode(const std::string& s) {
  if (s == "flexible") return ShiftMode::Flexible;
  if (s == "rigid") return ShiftMode::Rigid;
  throw std::invalid_argument("mode must be flexible or rigid, got '" + s + "'");
}

MethodSpec method_from(const json& j) {
  reject_unknown(j,
                 {"name", "solver", "mode", "k", "imputer", "epsilon", "max_iters",
                  "track_exploitability", "rank", "lambda", "cycles", "trees", "max_depth",
                  "min_leaf", "forest_iterations"},
                 "method");
  MethodSpec m;
  m.name = get_as<std::string>(j, "name", "");
  const auto solver = get_as<std::string>(j, "solver", "sbr");
  if (solver == "exact-fp") {
    m.solver = Solver::ExactFp;
  } else if (solver != "sbr") {
    throw std::invalid_argument("solver must be exact-fp or sbr, got '" + solver + "'");
  }
  m.mode = parse_mode(get_as<std::string>(j, "mode", "flexible"));
  m.k = get_as<int>(j, "k", m.k);
  m.imputer.method = get_as<std::string>(j, "imputer", m.imputer.method);
  if (!is_known_imputer(m.imputer.method)) {
    throw std::invalid_argument("unknown imputer '" + m.imputer.method + "'");
  }
  m.epsilon = get_as<double>(j, "epsilon", m.epsilon);
  m.max_iters = get_as<int>(j, "max_iters", m.max_iters);
  m.track_exploitability = get_as<bool>(j, "track_exploitability", m.track_exploitability);
  m.imputer.rank = get_as<int>(j, "rank", m.imputer.rank);
  m.imputer.lambda = get_as<double>(j, "lambda", m.imputer.lambda);
  m.imputer.cycles = get_as<int>(j, "cycles", m.imputer.cycles);
  m.imputer.trees = get_as<int>(j, "trees", m.imputer.trees);
  m.imputer.max_depth = get_as<int>(j, "max_depth", m.imputer.max_depth);
  m.imputer.min_leaf = get_as<int>(j, "min_leaf", m.imputer.min_leaf);
  m.imputer.forest_iterations = get_as<int>(j, "forest_iterations", m.imputer.forest_iterations);
  if (m.k < 1) throw std::invalid_argument("k must be at least 1");
  if (!(m.epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (m.max_iters < 1) throw std::invalid_argument("max_iters must be at least 1");
  return m;
}

std::string join_path(const std::string& base, const std::string& path) {
  if (path.empty() || path.front() == '/' || base.empty()) return path;
  return base.back() == '/' ? base + path : base + "/" + path;
}

}  // namespace

MethodSpec method_from_json(const std::string& text) { return method_from(parse_json(text)); }

std::string method_json(const MethodSpec& m) {
  const json out = {{"name", m.name},
                    {"solver", solver_name(m.solver)},
                    {"mode", mode_name(m.mode)},
                    {"k", m.k},
                    {"imputer", m.imputer.method},
                    {"epsilon", m.epsilon},
                    {"max_iters", m.max_iters},
                    {"track_exploitability", m.track_exploitability},
                    {"rank", m.imputer.rank},
                    {"lambda", m.imputer.lambda},
                    {"cycles", m.imputer.cycles},
                    {"trees", m.imputer.trees},
                    {"max_depth", m.imputer.max_depth},
                    {"min_leaf", m.imputer.min_leaf},
                    {"forest_iterations", m.imputer.forest_iterations}};
  return out.dump();
}

ExperimentPlan plan_from_json(const std::string& text, const std::string& base_dir) {
  const json j = parse_json(text);
  reject_unknown(j,
                 {"format", "version", "month", "days", "train_days", "test_days", "methods",
                  "baseline", "agents", "reps", "seed"},
                 "plan");
  if (get_as<std::string>(j, "format", "") != "fsru-plan") {
    throw std::invalid_argument("plan: format must be fsru-plan");
  }
  if (get_as<int>(j, "version", -1) != kFileVersion) {
    throw std::invalid_argument("plan: unsupported version");
  }
  if (j.contains("month") == j.contains("days")) {
    throw std::invalid_argument("plan: give exactly one of month or days");
  }
  std::vector<DayInstance> days;
  if (j.contains("month")) {
    const json& mj = j["month"];
    reject_unknown(mj, {"num_zones", "horizon", "num_agents", "days", "day_noise", "seed"},
                   "month");
    MonthConfig mc;
    mc.num_zones = get_as<int>(mj, "num_zones", mc.num_zones);
    mc.horizon = get_as<int>(mj, "horizon", mc.horizon);
    mc.num_agents = get_as<int>(mj, "num_agents", mc.num_agents);
    mc.days = get_as<int>(mj, "days", mc.days);
    mc.day_noise = get_as<double>(mj, "day_noise", mc.day_noise);
    mc.seed = get_as<std::uint64_t>(mj, "seed", mc.seed);
    days = synthetic_month(mc);
  } else {
    if (!j["days"].is_array()) throw std::invalid_argument("plan: days must be a list");
    for (const json& dj : j["days"]) {
      reject_unknown(dj, {"id", "day_of_week", "path"}, "day");
      DayInstance d;
      d.id = get_as<int>(dj, "id", -1);
      if (d.id < 0) throw std::invalid_argument("day: id must be a nonnegative integer");
      d.day_of_week = get_as<int>(dj, "day_of_week", d.id % 7);
      d.instance = load_instance(join_path(base_dir, get_as<std::string>(dj, "path", "")));
      days.push_back(std::move(d));
    }
  }
  const auto reps = get_as<int>(j, "reps", 3);
  const auto seed = get_as<std::uint64_t>(j, "seed", 0);
  std::vector<MethodSpec> methods;
  if (j.contains("methods")) {
    if (!j["methods"].is_array()) throw std::invalid_argument("plan: methods must be a list");
    for (const json& mj : j["methods"]) methods.push_back(method_from(mj));
  }
  ExperimentPlan plan;
  if (j.contains("train_days") || j.contains("test_days")) {
    const auto train_ids = get_as<std::vector<int>>(j, "train_days", {});
    const auto test_ids = get_as<std::vector<int>>(j, "test_days", {});
    auto pick = [&](const std::vector<int>& ids, std::vector<DayInstance>& into) {
      for (const int id : ids) {
        const auto it = std::find_if(days.begin(), days.end(),
                                     [&](const DayInstance& d) { return d.id == id; });
        if (it == days.end()) throw std::invalid_argument("plan: no day with id " + std::to_string(id));
        into.push_back(*it);
      }
    };
    pick(train_ids, plan.train);
    pick(test_ids, plan.test);
    plan.methods = std::move(methods);
    plan.reps = reps;
    plan.seed = seed;
  } else {
    plan = month_plan(days, std::move(methods), reps, seed);
  }
  if (j.contains("baseline")) {
    const json& bj = j["baseline"];
    reject_unknown(bj, {"epsilon", "max_iters"}, "baseline");
    plan.baseline = MethodSpec::baseline(get_as<double>(bj, "epsilon", 1e-3),
                                         get_as<int>(bj, "max_iters", 500));
  }
  plan.agents = get_as<int>(j, "agents", 0);
  return plan;
}

ExperimentPlan load_plan(const std::string& path) {
  const auto slash = path.find_last_of('/');
  return plan_from_json(read_text(path), slash == std::string::npos ? "." : path.substr(0, slash));
}

TrainedPolicy train_policy(const MethodSpec& method, const FsruInstance& instance,
                           std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  FpResult result;
  if (method.solver == Solver::ExactFp) {
    FpConfig config;
    config.epsilon = method.epsilon;
    config.max_iters = method.max_iters;
    config.mode = method.mode;
    result = run_fp(instance, config);
  } else {
    SbrConfig config;
    config.k = method.k;
    config.imputer = method.imputer;
    config.imputer.seed = derive_seed(seed, 1);
    config.epsilon = method.epsilon;
    config.max_iters = method.max_iters;
    config.seed = seed;
    config.mode = method.mode;
    config.track_exploitability = method.track_exploitability;
    result = run_sbr(instance, config);
  }
  TrainedPolicy out{std::move(result.policy), std::move(result.report), 0.0};
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

std::vector<DayInstance> synthetic_month(const MonthConfig& config) {
  if (config.days < 1) throw std::invalid_argument("synthetic_month: days must be positive");
  if (config.day_noise < 0.0 || config.day_noise >= 1.0) {
    throw std::invalid_argument("synthetic_month: day_noise must lie in [0, 1)");
  }
  std::vector<DayInstance> month;
  month.reserve(static_cast<std::size_t>(config.days));
  for (int d = 0; d < config.days; ++d) {
    DayInstance day;
    day.id = d;
    day.day_of_week = d % 7;
    const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(d));
    SynthConfig synth = day.weekend()
                            ? weekend_config(config.num_zones, config.horizon, config.num_agents, seed)
                            : weekday_config(config.num_zones, config.horizon, config.num_agents, seed);
    SplitMix64 rng = make_stream(seed, 0x6e6f697365);
    const double factor = 1.0 + config.day_noise * (2.0 * rng.uniform() - 1.0);
    synth.base_intensity *= factor;
    for (auto& peak : synth.peaks) peak.intensity *= factor;
    day.instance = generate_synthetic(synth).instance;
    month.push_back(std::move(day));
  }
  return month;
}

ExperimentPlan month_plan(const std::vector<DayInstance>& month, std::vector<MethodSpec> methods,
                          int reps, std::uint64_t seed) {
  ExperimentPlan plan;
  for (const DayInstance& day : month) {
    (day.id < 7 ? plan.train : plan.test).push_back(day);
  }
  plan.methods = std::move(methods);
  plan.reps = reps;
  plan.seed = seed;
  return plan;
}

void validate_plan(const ExperimentPlan& plan) {
  if (plan.train.empty()) throw std::invalid_argument("plan: no training days");
  if (plan.test.empty()) throw std::invalid_argument("plan: no test days");
  if (plan.reps < 1) throw std::invalid_argument("plan: reps must be at least 1");
  std::set<int> train_ids;
  for (const auto& d : plan.train) {
    if (!train_ids.insert(d.id).second) throw std::invalid_argument("plan: duplicate training day id");
  }
  std::set<int> test_ids;
  for (const auto& d : plan.test) {
    if (train_ids.count(d.id)) {
      throw std::invalid_argument("plan: day " + std::to_string(d.id) +
                                  " is both a training and a test day");
    }
    if (!test_ids.insert(d.id).second) throw std::invalid_argument("plan: duplicate test day id");
  }
  std::set<std::string> names{plan.baseline.name};
  for (const auto& m : plan.methods) {
    if (m.name.empty()) throw std::invalid_argument("plan: method without a name");
    if (!names.insert(m.name).second) {
      throw std::invalid_argument("plan: duplicate method name '" + m.name + "'");
    }
  }
  const FsruInstance& ref = plan.train.front().instance;
  auto check = [&](const DayInstance& d) {
    const auto problems = validate_instance(d.instance);
    if (!problems.empty()) {
      throw std::invalid_argument("plan: day " + std::to_string(d.id) + ": " +
                                  problems.front().field + ": " + problems.front().message);
    }
    if (d.instance.num_zones != ref.num_zones || d.instance.horizon != ref.horizon ||
        d.instance.max_hours != ref.max_hours || d.instance.max_breaks != ref.max_breaks) {
      throw std::invalid_argument("plan: day " + std::to_string(d.id) + " has other dimensions");
    }
    if (d.day_of_week < 0 || d.day_of_week > 6) {
      throw std::invalid_argument("plan: day_of_week must lie in 0..6");
    }
  };
  for (const auto& d : plan.train) check(d);
  for (const auto& d : plan.test) check(d);
}

double percent_improvement(double method, double baseline) {
  if (!(baseline > 0.0)) return kNaN;
  return 100.0 * (method - baseline) / baseline;
}

std::vector<MethodSummary> summarize(const std::vector<ResultCell>& cells) {
  std::vector<std::string> order;
  std::map<std::pair<std::string, int>, std::vector<double>> groups;
  std::map<std::string, std::set<int>> days;
  for (const ResultCell& c : cells) {
    if (std::find(order.begin(), order.end(), c.method) == order.end()) order.push_back(c.method);
    days[c.method].insert(c.train_day);
    auto& all = groups[{c.method, -1}];
    auto& one = groups[{c.method, c.train_day}];
    if (c.flagged) continue;
    all.push_back(c.improvement);
    one.push_back(c.improvement);
  }
  auto make = [&](const std::string& method, int day) {
    const auto& v = groups[{method, day}];
    MethodSummary s;
    s.method = method;
    s.train_day = day;
    s.cells = static_cast<int>(v.size());
    if (v.empty()) {
      s.average = s.best = s.worst = kNaN;
    } else {
      s.average = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      s.best = *std::max_element(v.begin(), v.end());
      s.worst = *std::min_element(v.begin(), v.end());
    }
    return s;
  };
  std::vector<MethodSummary> out;
  for (const auto& method : order) {
    out.push_back(make(method, -1));
    for (const int day : days[method]) out.push_back(make(method, day));
  }
  return out;
}

ResultTable compare_methods(const ExperimentPlan& plan) {
  validate_plan(plan);
  std::vector<const MethodSpec*> methods{&plan.baseline};
  for (const auto& m : plan.methods) methods.push_back(&m);

  // Training: every (method, training day).
  struct Job {
    const MethodSpec* method;
    const DayInstance* day;
    TrainedPolicy trained;
  };
  std::vector<Job> jobs;
  for (const MethodSpec* m : methods) {
    for (const auto& d : plan.train) jobs.push_back({m, &d, {}});
  }
  parallel_for(
      jobs.size(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t j = begin; j < end; ++j) {
          Job& job = jobs[j];
          job.trained = train_policy(*job.method, with_agents(job.day->instance, plan.agents),
                                     derive_seed(plan.seed, static_cast<std::uint64_t>(job.day->id)));
        }
      },
      1);

  // Evaluation: every trained policy on every test day of its class.
  struct Eval {
    std::size_t job;
    const DayInstance* day;
    RevenueStats stats;
  };
  std::vector<Eval> evals;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (const auto& d : plan.test) {
      if (d.weekend() == jobs[j].day->weekend()) evals.push_back({j, &d, {}});
    }
  }
  const std::uint64_t eval_seed = derive_seed(plan.seed, kEvaluationStream);
  parallel_for(
      evals.size(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t e = begin; e < end; ++e) {
          Eval& ev = evals[e];
          ev.stats = evaluate_policy(jobs[ev.job].trained.policy, ev.day->instance, plan.reps,
                                     derive_seed(eval_seed, static_cast<std::uint64_t>(ev.day->id)),
                                     plan.agents);
          ev.stats.revenues.clear();
          ev.stats.revenues.shrink_to_fit();
        }
      },
      1);

  // Baseline evaluations are the first block of jobs.
  std::map<std::pair<int, int>, double> baseline;
  for (const Eval& ev : evals) {
    if (jobs[ev.job].method == &plan.baseline) {
      baseline[{jobs[ev.job].day->id, ev.day->id}] = ev.stats.mean;
    }
  }

  ResultTable table;
  for (const Job& job : jobs) {
    table.training.push_back({job.method->name, job.day->id, job.trained.seconds,
                              job.trained.report.iterations, job.trained.report.converged});
  }
  for (const Eval& ev : evals) {
    const Job& job = jobs[ev.job];
    ResultCell c;
    c.method = job.method->name;
    c.train_day = job.day->id;
    c.train_weekday = job.day->day_of_week;
    c.test_day = ev.day->id;
    c.test_weekday = ev.day->day_of_week;
    c.mean_revenue = ev.stats.mean;
    c.stderr_revenue = ev.stats.pooled_stderr;
    c.baseline_revenue = baseline.at({c.train_day, c.test_day});
    c.flagged = !(c.baseline_revenue > 0.0);
    c.improvement = percent_improvement(c.mean_revenue, c.baseline_revenue);
    table.cells.push_back(c);
  }
  table.summaries = summarize(table.cells);
  return table;
}

void write_result_csv(std::ostream& out, const ResultTable& table) {
  out << "method,train_day,train_weekday,test_day,test_weekday,mean_revenue,stderr,"
         "baseline_revenue,improvement_pct,flagged\n";
  const auto old_precision = out.precision(17);
  for (const auto& c : table.cells) {
    out << c.method << ',' << c.train_day << ',' << c.train_weekday << ',' << c.test_day << ','
        << c.test_weekday << ',' << c.mean_revenue << ',' << c.stderr_revenue << ','
        << c.baseline_revenue << ',';
    if (!c.flagged) out << c.improvement;
    out << ',' << (c.flagged ? 1 : 0) << '\n';
  }
  out.precision(old_precision);
}

std::string result_json(const ResultTable& table) {
  json cells = json::array();
  for (const auto& c : table.cells) {
    cells.push_back({{"method", c.method},
                     {"train_day", c.train_day},
                     {"train_weekday", c.train_weekday},
                     {"test_day", c.test_day},
                     {"test_weekday", c.test_weekday},
                     {"mean_revenue", c.mean_revenue},
                     {"stderr", c.stderr_revenue},
                     {"baseline_revenue", c.baseline_revenue},
                     {"improvement_pct", c.flagged ? json(nullptr) : json(c.improvement)},
                     {"flagged", c.flagged}});
  }
  json training = json::array();
  for (const auto& t : table.training) {
    training.push_back({{"method", t.method},
                        {"train_day", t.train_day},
                        {"seconds", t.seconds},
                        {"iterations", t.iterations},
                        {"converged", t.converged}});
  }
  json summaries = json::array();
  auto number = [](double v) { return std::isnan(v) ? json(nullptr) : json(v); };
  for (const auto& s : table.summaries) {
    summaries.push_back({{"method", s.method},
                         {"train_day", s.train_day < 0 ? json("all") : json(s.train_day)},
                         {"cells", s.cells},
                         {"average_pct", number(s.average)},
                         {"best_pct", number(s.best)},
                         {"worst_pct", number(s.worst)}});
  }
  const json out = {{"format", "fsru-results"},
                    {"version", kFileVersion},
                    {"baseline", "exact-fp, rigid shifts"},
                    {"improvement", "100 * (method - baseline) / baseline"},
                    {"cells", cells},
                    {"training", training},
                    {"summaries", summaries}};
  return out.dump(2);
}

std::map<int, int> best_policy_per_day(const ResultTable& table, const std::string& method) {
  // (test weekday, train day) -> revenue sum and count
  std::map<std::pair<int, int>, std::pair<double, int>> totals;
  for (const auto& c : table.cells) {
    if (c.method != method) continue;
    auto& t = totals[{c.test_weekday, c.train_day}];
    t.first += c.mean_revenue;
    t.second += 1;
  }
  std::map<int, int> best;
  std::map<int, double> best_value;
  // Map order visits training days in ascending order, so strict > keeps the earlier day.
  for (const auto& [key, t] : totals) {
    const double avg = t.first / t.second;
    const auto it = best_value.find(key.first);
    if (it == best_value.end() || avg > it->second) {
      best_value[key.first] = avg;
      best[key.first] = key.second;
    }
  }
  return best;
}

double occupancy_distance(const OccupancyMatrix& a, const OccupancyMatrix& b,
                          DistanceMetric metric) {
  if (!(a.space() == b.space())) throw std::invalid_argument("occupancy_distance: spaces differ");
  auto mass = [](const OccupancyMatrix& m) {
    double total = 0.0;
    for (const double v : m.values()) {
      if (!(v >= 0.0)) throw std::invalid_argument("occupancy_distance: negative or nan entry");
      total += v;
    }
    if (!(total > 0.0)) throw std::invalid_argument("occupancy_distance: zero-mass occupancy");
    return total;
  };
  const double ma = mass(a);
  const double mb = mass(b);
  const auto& va = a.values();
  const auto& vb = b.values();
  double sum = 0.0;
  if (metric == DistanceMetric::MeanAbsolute) {
    for (std::size_t i = 0; i < va.size(); ++i) sum += std::abs(va[i] / ma - vb[i] / mb);
    return sum / static_cast<double>(va.size());
  }
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double p = va[i] / ma;
    const double q = vb[i] / mb;
    const double m = 0.5 * (p + q);
    if (p > 0.0) sum += 0.5 * p * std::log(p / m);
    if (q > 0.0) sum += 0.5 * q * std::log(q / m);
  }
  return std::clamp(sum, 0.0, std::log(2.0));
}

std::vector<DistancePoint> distance_vs_simulations(const Policy& policy,
                                                   const FsruInstance& instance,
                                                   const OccupancyMatrix& reference,
                                                   const std::vector<int>& budgets,
                                                   std::uint64_t seed) {
  if (budgets.empty()) throw std::invalid_argument("distance_vs_simulations: no budgets");
  for (const int b : budgets) {
    if (b < 1) throw std::invalid_argument("distance_vs_simulations: budgets must be positive");
  }
  if (!(policy.space() == reference.space())) {
    throw std::invalid_argument("distance_vs_simulations: policy and reference spaces differ");
  }
  std::vector<std::size_t> order(budgets.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return budgets[x] < budgets[y];
  });
  const Policy random = uniform_start_policy(policy.space());
  std::vector<DistancePoint> curve(budgets.size());

  // Accumulates trajectories from successive simulations and records the
  // distances whenever a budget is reached.
  auto run = [&](const Policy& p, std::uint64_t stream, bool is_random) {
    OccupancyMatrix counts(p.space());
    int collected = 0;
    std::size_t next = 0;
    for (std::uint64_t r = 0; next < order.size(); ++r) {
      const Simulation sim = simulate(p, instance, derive_seed(stream, r));
      for (const Trajectory& traj : sim.trajectories) {
        for (const TrajectoryStep& st : traj.steps) counts.at(st.t, st.state, st.action) += 1.0;
        ++collected;
        while (next < order.size() && budgets[order[next]] == collected) {
          DistancePoint& pt = curve[order[next]];
          pt.budget = collected;
          const double mad = occupancy_distance(counts, reference, DistanceMetric::MeanAbsolute);
          const double js = occupancy_distance(counts, reference, DistanceMetric::JensenShannon);
          (is_random ? pt.random_mad : pt.mad) = mad;
          (is_random ? pt.random_js : pt.js) = js;
          ++next;
        }
        if (next == order.size()) break;
      }
    }
  };
  run(policy, derive_seed(seed, 0), false);
  run(random, derive_seed(seed, 1), true);
  return curve;
}

void write_distance_csv(std::ostream& out, const std::vector<DistancePoint>& curve) {
  out << "budget,mad,js_nats,random_mad,random_js_nats\n";
  const auto old_precision = out.precision(17);
  for (const auto& p : curve) {
    out << p.budget << ',' << p.mad << ',' << p.js << ',' << p.random_mad << ',' << p.random_js
        << '\n';
  }
  out.precision(old_precision);
}

}  // namespace fsru
