// Command-line front end: generate, train, evaluate, compare, distance.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "fsru/count_model.hpp"
#include "fsru/eval.hpp"
#include "fsru/exact_fp.hpp"
#include "fsru/instance_io.hpp"
#include "fsru/parallel.hpp"
#include "fsru/sbr.hpp"

namespace {

using nlohmann::json;

constexpr int kExitValidation = 2;
constexpr int kExitNotConverged = 3;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << '\n';
    return;
  }
  fsru::write_text(path, text);
}

void require_valid(const fsru::FsruInstance& instance) {
  const auto problems = fsru::validate_instance(instance);
  if (problems.empty()) return;
  std::string msg = "invalid instance:";
  for (const auto& p : problems) msg += "\n  " + p.field + ": " + p.message;
  throw ValidationError(msg);
}

fsru::ShiftMode parse_mode(const std::string& s) {
  return s == "rigid" ? fsru::ShiftMode::Rigid : fsru::ShiftMode::Flexible;
}

std::string report_json(const fsru::ConvergenceReport& r, const fsru::MethodSpec& method,
                        double seconds) {
  const json out = {{"format", "fsru-report"},
                    {"version", fsru::kFileVersion},
                    {"method", json::parse(fsru::method_json(method))},
                    {"converged", r.converged},
                    {"iterations", r.iterations},
                    {"best_iteration", r.best_iteration},
                    {"final_delta", r.final_delta},
                    {"delta_history", r.delta_history},
                    {"exploitability_history", r.exploitability_history},
                    {"seconds", seconds}};
  return out.dump(2);
}

// SynthConfig keys from a {"format": "fsru-synth", "version": 1} file.
void apply_synth_json(fsru::SynthConfig& c, const std::string& path) {
  json j;
  try {
    j = json::parse(fsru::read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError(path + ": malformed JSON: " + e.what());
  }
  if (j.value("format", "") != "fsru-synth" || j.value("version", -1) != fsru::kFileVersion) {
    throw ValidationError(path + ": expected format fsru-synth, version 1");
  }
  try {
    c.num_zones = j.value("num_zones", c.num_zones);
    c.horizon = j.value("horizon", c.horizon);
    c.step_minutes = j.value("step_minutes", c.step_minutes);
    c.num_agents = j.value("num_agents", c.num_agents);
    c.max_hours = j.value("max_hours", c.max_hours);
    c.max_breaks = j.value("max_breaks", c.max_breaks);
    c.base_intensity = j.value("base_intensity", c.base_intensity);
    c.fare_base = j.value("fare_base", c.fare_base);
    c.fare_per_hop = j.value("fare_per_hop", c.fare_per_hop);
    c.fare_noise = j.value("fare_noise", c.fare_noise);
    c.seed = j.value("seed", c.seed);
    if (j.contains("cost")) {
      const json& cj = j["cost"];
      c.cost.base = cj.value("base", c.cost.base);
      c.cost.per_hop = cj.value("per_hop", c.cost.per_hop);
      c.cost.sink = cj.value("sink", c.cost.sink);
    }
    if (j.contains("peaks")) {
      c.peaks.clear();
      for (const json& pj : j["peaks"]) {
        fsru::DemandPeak p;
        p.time = pj.value("time", p.time);
        p.zones = pj.value("zones", p.zones);
        p.intensity = pj.value("intensity", p.intensity);
        p.width = pj.value("width", p.width);
        c.peaks.push_back(p);
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Taxi fleet equilibrium policies: exact fictitious play and simulation-based best response"};
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: hardware default)");

  // generate
  auto* gen = app.add_subcommand("generate", "Write synthetic day instances");
  std::string gen_preset = "weekday";
  std::string gen_config;
  std::string gen_out;
  int gen_zones = 9, gen_horizon = 24, gen_agents = 200;
  std::uint64_t gen_seed = 0;
  gen->add_option("--preset", gen_preset, "weekday, weekend or month")
      ->check(CLI::IsMember({"weekday", "weekend", "month"}));
  gen->add_option("--config", gen_config, "fsru-synth JSON overriding the preset");
  gen->add_option("--zones", gen_zones, "Number of zones")->check(CLI::PositiveNumber);
  gen->add_option("--horizon", gen_horizon, "Steps per day")->check(CLI::PositiveNumber);
  gen->add_option("--agents", gen_agents, "Number of taxis")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("-o,--out", gen_out, "Instance file, or directory for --preset month")->required();

  // train
  auto* train = app.add_subcommand("train", "Train a policy on one instance");
  std::string tr_instance, tr_out, tr_report, tr_occupancy;
  fsru::MethodSpec tr_method;
  std::string tr_solver = "sbr", tr_mode = "flexible";
  std::uint64_t tr_seed = 0;
  int tr_agents = 0;
  train->add_option("-i,--instance", tr_instance, "Instance file")->required();
  train->add_option("--solver", tr_solver, "exact-fp or sbr")
      ->check(CLI::IsMember({"exact-fp", "sbr"}));
  train->add_option("--mode", tr_mode, "Shift mode")->check(CLI::IsMember({"flexible", "rigid"}));
  train->add_option("--k", tr_method.k, "Top-k trajectories per step")->check(CLI::PositiveNumber);
  train->add_option("--imputer", tr_method.imputer.method,
                    "mf, mice, missforest, supervised or none");
  train->add_option("--epsilon", tr_method.epsilon, "Policy-change threshold")
      ->check(CLI::PositiveNumber);
  train->add_option("--max-iters", tr_method.max_iters, "Iteration cap")->check(CLI::PositiveNumber);
  train->add_option("--agents", tr_agents, "Override the instance agent count");
  train->add_option("--seed", tr_seed, "Random seed");
  train->add_option("-o,--out", tr_out, "Policy file")->required();
  train->add_option("--report", tr_report, "Convergence report JSON");
  train->add_option("--occupancy", tr_occupancy, "Occupancy of the policy against its own count model");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Simulate a policy and report revenue statistics");
  std::string ev_policy, ev_instance, ev_out;
  int ev_reps = 3;
  std::uint64_t ev_seed = 0;
  evaluate->add_option("-p,--policy", ev_policy, "Policy file")->required();
  evaluate->add_option("-i,--instance", ev_instance, "Instance file")->required();
  evaluate->add_option("--reps", ev_reps, "Repetitions")->check(CLI::PositiveNumber);
  evaluate->add_option("--seed", ev_seed, "Random seed");
  evaluate->add_option("-o,--out", ev_out, "Statistics JSON (default stdout)");

  // compare
  auto* compare = app.add_subcommand("compare", "Run a train/test comparison plan");
  std::string cmp_plan, cmp_csv, cmp_json;
  std::uint64_t cmp_seed = 0;
  compare->add_option("--plan", cmp_plan, "fsru-plan JSON")->required();
  auto* cmp_seed_opt = compare->add_option("--seed", cmp_seed, "Override the plan seed");
  compare->add_option("--csv", cmp_csv, "Result table CSV (default stdout)");
  compare->add_option("--json", cmp_json, "Result table JSON");

  // distance
  auto* distance = app.add_subcommand("distance", "Occupancy distances");
  std::string ds_a, ds_b, ds_policy, ds_instance, ds_out;
  std::vector<int> ds_budgets;
  std::uint64_t ds_seed = 0;
  distance->add_option("-a", ds_a, "Reference occupancy file")->required();
  distance->add_option("-b", ds_b, "Second occupancy file");
  distance->add_option("-p,--policy", ds_policy, "Policy to simulate instead of -b");
  distance->add_option("-i,--instance", ds_instance, "Instance for --policy");
  distance->add_option("--budgets", ds_budgets, "Trajectory budgets for the curve");
  distance->add_option("--seed", ds_seed, "Random seed");
  distance->add_option("-o,--out", ds_out, "CSV output (default stdout)");

  CLI11_PARSE(app, argc, argv);
  fsru::set_thread_count(threads);

  try {
    if (*gen) {
      if (gen_preset == "month") {
        fsru::MonthConfig mc;
        mc.num_zones = gen_zones;
        mc.horizon = gen_horizon;
        mc.num_agents = gen_agents;
        mc.seed = gen_seed;
        const auto month = fsru::synthetic_month(mc);
        json days = json::array();
        for (const auto& d : month) {
          char name[32];
          std::snprintf(name, sizeof name, "day%02d.fsru", d.id);
          fsru::save_instance(d.instance, gen_out + "/" + name);
          days.push_back({{"id", d.id}, {"day_of_week", d.day_of_week}, {"path", name}});
        }
        const json plan = {{"format", "fsru-plan"}, {"version", fsru::kFileVersion},
                           {"days", days},          {"methods", json::array()},
                           {"reps", 3},             {"seed", gen_seed}};
        fsru::write_text(gen_out + "/plan.json", plan.dump(2) + "\n");
        return 0;
      }
      fsru::SynthConfig c = gen_preset == "weekend"
                                ? fsru::weekend_config(gen_zones, gen_horizon, gen_agents, gen_seed)
                                : fsru::weekday_config(gen_zones, gen_horizon, gen_agents, gen_seed);
      if (!gen_config.empty()) apply_synth_json(c, gen_config);
      const auto result = fsru::generate_synthetic(c);
      require_valid(result.instance);
      fsru::save_instance(result.instance, gen_out);
      return 0;
    }

    if (*train) {
      fsru::FsruInstance instance = fsru::load_instance(tr_instance);
      if (tr_agents > 0) instance.num_agents = tr_agents;
      require_valid(instance);
      if (!fsru::is_known_imputer(tr_method.imputer.method)) {
        throw ValidationError("unknown imputer '" + tr_method.imputer.method + "'");
      }
      tr_method.name = tr_solver;
      tr_method.solver = tr_solver == "exact-fp" ? fsru::Solver::ExactFp : fsru::Solver::Sbr;
      tr_method.mode = parse_mode(tr_mode);
      if (tr_method.solver == fsru::Solver::Sbr && tr_method.k > instance.num_agents) {
        throw ValidationError("--k exceeds the number of agents");
      }
      const auto trained = fsru::train_policy(tr_method, instance, tr_seed);
      fsru::save_policy(trained.policy, tr_out);
      if (!tr_report.empty()) {
        fsru::write_text(tr_report, report_json(trained.report, tr_method, trained.seconds) + "\n");
      }
      if (!tr_occupancy.empty()) {
        const auto counts =
            fsru::agent_count_probability(trained.policy, instance, instance.num_agents - 1);
        const fsru::SingleAgentModel model(instance, fsru::expected_kernel(counts, instance));
        fsru::save_occupancy(fsru::policy_occupancy(trained.policy, model), tr_occupancy);
      }
      if (!trained.report.converged) {
        std::cerr << "not converged after " << trained.report.iterations
                  << " iterations (last change " << trained.report.final_delta << ")\n";
        return kExitNotConverged;
      }
      return 0;
    }

    if (*evaluate) {
      const fsru::FsruInstance instance = fsru::load_instance(ev_instance);
      require_valid(instance);
      const fsru::Policy policy = fsru::load_policy(ev_policy);
      if (!(policy.space() == fsru::AugmentedSpace::of(instance, policy.space().mode()))) {
        throw ValidationError("policy dimensions do not match the instance");
      }
      const auto stats = fsru::evaluate_policy(policy, instance, ev_reps, ev_seed);
      write_output(ev_out, fsru::stats_json(stats));
      return 0;
    }

    if (*compare) {
      fsru::ExperimentPlan plan = fsru::load_plan(cmp_plan);
      if (*cmp_seed_opt) plan.seed = cmp_seed;
      fsru::validate_plan(plan);
      const auto table = fsru::compare_methods(plan);
      std::ostringstream csv;
      fsru::write_result_csv(csv, table);
      write_output(cmp_csv, csv.str());
      if (!cmp_json.empty()) fsru::write_text(cmp_json, fsru::result_json(table) + "\n");
      for (const auto& t : table.training) {
        if (!t.converged) return kExitNotConverged;
      }
      return 0;
    }

    if (*distance) {
      const fsru::OccupancyMatrix a = fsru::load_occupancy(ds_a);
      std::ostringstream out;
      out.precision(17);
      if (!ds_b.empty()) {
        const fsru::OccupancyMatrix b = fsru::load_occupancy(ds_b);
        out << "metric,value\n"
            << "mad," << fsru::occupancy_distance(a, b, fsru::DistanceMetric::MeanAbsolute) << '\n'
            << "js_nats," << fsru::occupancy_distance(a, b, fsru::DistanceMetric::JensenShannon)
            << '\n';
      } else {
        if (ds_policy.empty() || ds_instance.empty() || ds_budgets.empty()) {
          throw ValidationError("distance needs -b, or --policy, --instance and --budgets");
        }
        const fsru::FsruInstance instance = fsru::load_instance(ds_instance);
        require_valid(instance);
        const fsru::Policy policy = fsru::load_policy(ds_policy);
        fsru::write_distance_csv(
            out, fsru::distance_vs_simulations(policy, instance, a, ds_budgets, ds_seed));
      }
      write_output(ds_out, out.str());
      return 0;
    }
  } catch (const ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kExitValidation;
  } catch (const fsru::ParseError& e) {
    std::cerr << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
