// Command-line surface for the fleet balancing pipeline: synthetic data
// generation, predictor selection, uncertainty estimation, one-shot solves,
// receding-horizon simulation and report aggregation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "evbal/io.hpp"
#include "evbal/metrics.hpp"
#include "evbal/reformulation.hpp"
#include "evbal/simulator.hpp"
#include "evbal/uncertainty.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace evbal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitSolver = 3;

struct GlobalOpts {
  std::string config;
  std::string out = "out";
  std::uint64_t seed = 1;
  std::string mode = "counterpart";
  double alpha = 0.25;
  double eta = 0.1;
  double tol = 1e-6;
};

PredictorSpec parse_predictor(const std::string& text, int intervals_per_day) {
  PredictorSpec spec;
  spec.period = intervals_per_day;
  if (text == "persistence") {
    spec.kind = PredictorSpec::Kind::persistence;
  } else if (text == "seasonal") {
    spec.kind = PredictorSpec::Kind::seasonal_naive;
  } else if (text.rfind("ma:", 0) == 0) {
    spec.kind = PredictorSpec::Kind::moving_average;
    spec.window = std::stoi(text.substr(3));
  } else if (text.rfind("ar:", 0) == 0) {
    spec.kind = PredictorSpec::Kind::ar;
    spec.order = std::stoi(text.substr(3));
  } else {
    throw CLI::ValidationError("--predictor", "expected persistence|seasonal|ma:W|ar:P");
  }
  return spec;
}

void apply_config_file(GlobalOpts& g, BootstrapConfig& bootstrap, std::string& data_dir,
                       std::string& predictor) {
  if (g.config.empty()) return;
  std::ifstream in(g.config);
  if (!in) throw CLI::ValidationError("--config", "cannot read " + g.config);
  nlohmann::json j = nlohmann::json::parse(in);
  if (j.contains("out")) g.out = j["out"].get<std::string>();
  if (j.contains("seed")) g.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("mode")) g.mode = j["mode"].get<std::string>();
  if (j.contains("alpha")) g.alpha = j["alpha"].get<double>();
  if (j.contains("eta")) g.eta = j["eta"].get<double>();
  if (j.contains("tol")) g.tol = j["tol"].get<double>();
  if (j.contains("data")) data_dir = j["data"].get<std::string>();
  if (j.contains("predictor")) predictor = j["predictor"].get<std::string>();
  if (j.contains("bootstrap")) {
    const auto& b = j["bootstrap"];
    if (b.contains("outer_count")) bootstrap.outer_count = b["outer_count"].get<int>();
    if (b.contains("inner_count")) bootstrap.inner_count = b["inner_count"].get<int>();
    if (b.contains("studentize_count")) bootstrap.studentize_count = b["studentize_count"].get<int>();
    if (b.contains("resample_size")) bootstrap.resample_size = b["resample_size"].get<int>();
    if (b.contains("ridge")) bootstrap.ridge = b["ridge"].get<double>();
  }
}

struct LoadedData {
  ScenarioConfig scenario;
  Matrix history_demand, history_supply;
};

LoadedData load_data(const std::string& dir) {
  LoadedData d;
  d.scenario = io::load_scenario(dir);
  d.history_demand = io::load_history_csv((fs::path(dir) / "history_demand.csv").string(),
                                          d.scenario.city.n_regions);
  d.history_supply = io::load_history_csv((fs::path(dir) / "history_supply.csv").string(),
                                          d.scenario.city.n_regions);
  return d;
}

Policy make_policy(const LoadedData& data, const std::string& mode, const std::string& predictor,
                   const std::string& uncertainty_dir, bool conservative, double tol) {
  const CityModel& city = data.scenario.city;
  Policy p;
  p.name = mode;
  ProgramMode m = program_mode_from_string(mode);
  p.kind = m == ProgramMode::counterpart ? Policy::Kind::dro_counterpart
           : m == ProgramMode::theorem1_block ? Policy::Kind::dro_theorem1
                                              : Policy::Kind::non_robust;
  PredictorSpec spec = parse_predictor(predictor, city.intervals_per_day);
  SeriesHistory demand_hist{data.history_demand, DemandSupplyVector::Role::demand, 60};
  SeriesHistory supply_hist{data.history_supply, DemandSupplyVector::Role::supply, 60};
  p.demand_predictor = fit(spec, demand_hist);
  p.supply_predictor = fit(spec, supply_hist);
  p.demand_history = data.history_demand;
  p.supply_history = data.history_supply;
  if (p.kind != Policy::Kind::non_robust) {
    auto read = [&](const std::string& name) {
      std::ifstream in(fs::path(uncertainty_dir) / name);
      if (!in) throw std::runtime_error("missing " + name + " under " + uncertainty_dir + "; run `uncertainty` first");
      std::stringstream ss;
      ss << in.rdbuf();
      return report_from_json(ss.str());
    };
    p.demand_report = read("uncertainty_demand.json");
    p.supply_report = read("uncertainty_supply.json");
  }
  p.conservative = conservative;
  p.options.solve.tol = tol;
  return p;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Distributionally robust EV fleet balancing"};
  app.require_subcommand(1);

  GlobalOpts g;
  BootstrapConfig bootstrap;
  std::string data_dir = "data";
  std::string predictor = "ar:1";
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--seed", g.seed, "global random seed");
  app.add_option("--mode", g.mode, "counterpart|theorem1|non-robust");
  app.add_option("--alpha", g.alpha, "significance level");
  app.add_option("--eta", g.eta, "confidence parameter");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--tol", g.tol, "solver tolerance");

  auto* cmd_gen = app.add_subcommand("gen-data", "generate a synthetic city, histories and scenario");
  io::GeneratorSpec gen;
  cmd_gen->add_option("--regions", gen.n_regions, "number of regions");
  cmd_gen->add_option("--intervals", gen.intervals_per_day, "intervals per day");
  cmd_gen->add_option("--horizon", gen.horizon, "decision horizon");
  cmd_gen->add_option("--stations", gen.n_stations, "number of charging regions");
  cmd_gen->add_option("--fleet", gen.fleet_size, "fleet size");
  cmd_gen->add_option("--days", gen.history_days, "history length in days");
  cmd_gen->add_option("--scale", gen.demand_scale, "peak demand scale");
  cmd_gen->add_option("--noise", gen.demand_noise, "relative demand noise");
  cmd_gen->add_option("--noise-abs", gen.demand_noise_abs, "absolute demand noise");
  cmd_gen->add_option("--churn", gen.lowbatt_share, "mean share of vacant EVs turning low-battery");
  cmd_gen->add_option("--theta", gen.fairness_weight, "charging fairness weight");
  cmd_gen->add_option("--beta", gen.charge_weight, "low-battery move cost weight");
  cmd_gen->add_option("--episode-len", gen.episode_len, "episode length in intervals");
  cmd_gen->add_flag("--poisson", gen.poisson_demand, "poisson demand instead of truncated normal");

  auto* cmd_fit = app.add_subcommand("fit", "select a predictor by held-out MSE");
  cmd_fit->add_option("--data", data_dir, "gen-data output directory");

  auto* cmd_unc = app.add_subcommand("uncertainty", "estimate uncertainty set parameters");
  cmd_unc->add_option("--data", data_dir, "gen-data output directory");
  cmd_unc->add_option("--predictor", predictor, "persistence|seasonal|ma:W|ar:P");
  cmd_unc->add_option("--outer", bootstrap.outer_count, "outer bootstrap count A");
  cmd_unc->add_option("--inner", bootstrap.inner_count, "inner bootstrap count B");
  cmd_unc->add_option("--studentize", bootstrap.studentize_count, "studentizing resamples C");
  cmd_unc->add_option("--resample", bootstrap.resample_size, "resample size (0: full)");
  bool conservative = false;

  auto* cmd_solve = app.add_subcommand("solve", "build and solve one balancing program");
  std::string uncertainty_dir;
  cmd_solve->add_option("--data", data_dir, "gen-data output directory");
  cmd_solve->add_option("--uncertainty", uncertainty_dir, "directory with uncertainty_*.json");
  cmd_solve->add_option("--predictor", predictor, "predictor spec");
  cmd_solve->add_flag("--conservative", conservative, "use the upper confidence bounds");

  auto* cmd_sim = app.add_subcommand("simulate", "receding-horizon evaluation");
  int episodes = 4;
  cmd_sim->add_option("--data", data_dir, "gen-data output directory");
  cmd_sim->add_option("--uncertainty", uncertainty_dir, "directory with uncertainty_*.json");
  cmd_sim->add_option("--predictor", predictor, "predictor spec");
  cmd_sim->add_option("--episodes", episodes, "number of episodes");
  double shift_mean = 0.0, shift_sd = 0.0;
  cmd_sim->add_option("--shift-mean", shift_mean, "demand mean shift factor override");
  cmd_sim->add_option("--shift-sd", shift_sd, "demand sd inflation override");
  cmd_sim->add_flag("--conservative", conservative, "use the upper confidence bounds");

  auto* cmd_report = app.add_subcommand("report", "aggregate simulation logs (last file is the baseline)");
  std::vector<std::string> log_files;
  cmd_report->add_option("logs", log_files, "simulation CSV files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and usage
    return kExitValidation;
  }
  apply_config_file(g, bootstrap, data_dir, predictor);
  bootstrap.significance = g.alpha;
  bootstrap.confidence = g.eta;
  bootstrap.seed = g.seed;
  if (uncertainty_dir.empty()) uncertainty_dir = g.out;

  if (cmd_gen->parsed()) {
    gen.seed = g.seed;
    io::gen_data(gen, g.out);
    std::cout << "wrote synthetic dataset to " << g.out << "\n";
    return kExitOk;
  }

  if (cmd_fit->parsed()) {
    LoadedData data = load_data(data_dir);
    const int kday = data.scenario.city.intervals_per_day;
    const int horizon = data.scenario.city.horizon;
    const Eigen::Index rows = data.history_demand.rows();
    const Eigen::Index split = rows * 3 / 4;

    std::vector<std::string> names = {"persistence", "seasonal", "ma:3", "ar:1", "ar:2"};
    fs::create_directories(g.out);
    std::ofstream csv(fs::path(g.out) / "mse_table.csv");
    csv << "# schema=1\npredictor,demand_mse,supply_mse\n";
    std::cout << "| predictor | demand MSE | supply MSE |\n|---|---|---|\n";
    std::string best;
    double best_mse = std::numeric_limits<double>::max();
    for (const auto& name : names) {
      PredictorSpec spec = parse_predictor(name, kday);
      double scores[2];
      for (int which = 0; which < 2; ++which) {
        const Matrix& full = which == 0 ? data.history_demand : data.history_supply;
        SeriesHistory train{full.topRows(split), DemandSupplyVector::Role::demand, 60};
        FittedPredictor fitted = fit(spec, train);
        const int ctx = fitted.min_context();
        double acc = 0;
        int count = 0;
        for (Eigen::Index t = split; t + horizon <= rows; ++t) {
          Matrix context = full.middleRows(t - ctx, ctx);
          Matrix pred = fitted.predict_rows(context, horizon);
          for (int s = 0; s < horizon; ++s)
            acc += (pred.row(s) - full.row(t + s)).squaredNorm();
          count += horizon * static_cast<int>(full.cols());
        }
        scores[which] = acc / std::max(1, count);
      }
      csv << name << "," << scores[0] << "," << scores[1] << "\n";
      std::cout << "| " << name << " | " << scores[0] << " | " << scores[1] << " |\n";
      if (scores[0] < best_mse) {
        best_mse = scores[0];
        best = name;
      }
    }
    std::cout << "best demand predictor: " << best << "\n";
    return kExitOk;
  }

  if (cmd_unc->parsed()) {
    LoadedData data = load_data(data_dir);
    const CityModel& city = data.scenario.city;
    PredictorSpec spec = parse_predictor(predictor, city.intervals_per_day);
    fs::create_directories(g.out);
    SeriesHistory demand_hist{data.history_demand, DemandSupplyVector::Role::demand, 60};
    SeriesHistory supply_hist{data.history_supply, DemandSupplyVector::Role::supply, 60};
    BootstrapConfig demand_cfg = bootstrap;
    BootstrapConfig supply_cfg = bootstrap;
    supply_cfg.seed = bootstrap.seed ^ 0x5u;
    EstimationReport demand_rep = run_estimation(demand_hist, spec, city.horizon, demand_cfg);
    EstimationReport supply_rep = run_estimation(supply_hist, spec, city.horizon, supply_cfg);
    std::ofstream(fs::path(g.out) / "uncertainty_demand.json") << report_to_json(demand_rep) << "\n";
    std::ofstream(fs::path(g.out) / "uncertainty_supply.json") << report_to_json(supply_rep) << "\n";
    std::cout << "demand: omega_hat=" << demand_rep.omega_hat << " gamma_hat=" << demand_rep.gamma_hat
              << "\nsupply: omega_hat=" << supply_rep.omega_hat << " gamma_hat=" << supply_rep.gamma_hat
              << "\n";
    return kExitOk;
  }

  if (cmd_solve->parsed()) {
    LoadedData data = load_data(data_dir);
    Policy policy = make_policy(data, g.mode, predictor, uncertainty_dir, conservative, g.tol);
    const CityModel& city = data.scenario.city;
    Matrix demand_ctx = data.history_demand.bottomRows(
        std::min<Eigen::Index>(data.history_demand.rows(), policy.demand_predictor.min_context() + 4));
    Matrix supply_ctx = data.history_supply.bottomRows(
        std::min<Eigen::Index>(data.history_supply.rows(), policy.supply_predictor.min_context() + 4));
    Forecast demand_fc = predict(policy.demand_predictor, demand_ctx, city.horizon);
    Forecast supply_fc = predict(policy.supply_predictor, supply_ctx, city.horizon,
                                 DemandSupplyVector::Role::supply);

    MomentUncertaintySet demand_set, supply_set;
    if (policy.kind == Policy::Kind::non_robust) {
      demand_set = MomentUncertaintySet::singleton(demand_fc.point);
      supply_set = MomentUncertaintySet::singleton(supply_fc.point);
    } else {
      demand_set = build_uncertainty_set(policy.demand_report, demand_fc.point, conservative);
      supply_set = build_uncertainty_set(policy.supply_report, supply_fc.point, conservative);
    }
    BalancingOptions options = policy.options;
    options.mode = program_mode_from_string(g.mode);
    BalancingSolution sol = solve_balancing(city, data.scenario.kernel, data.scenario.initial,
                                            demand_fc.point, supply_fc.point, demand_set, supply_set,
                                            options);
    fs::create_directories(g.out);
    io::write_decision_csv((fs::path(g.out) / "decisions.csv").string(), sol.decision);
    io::write_solution_json((fs::path(g.out) / "solution.json").string(), sol);
    std::cout << "status=" << conic::to_string(sol.status) << " objective=" << sol.objective
              << " solve_ms=" << sol.solve_ms << "\n";
    return sol.status == conic::SolveStatus::optimal ? kExitOk : kExitSolver;
  }

  if (cmd_sim->parsed()) {
    LoadedData data = load_data(data_dir);
    if (shift_mean > 0) data.scenario.shift.mean_factor = shift_mean;
    if (shift_sd > 0) data.scenario.shift.sd_factor = shift_sd;
    data.scenario.seed = g.seed;
    Policy policy = make_policy(data, g.mode, predictor, uncertainty_dir, conservative, g.tol);
    SimulationLog log = run_receding_horizon(policy, data.scenario, episodes);
    fs::create_directories(g.out);
    std::string stem = "sim_" + g.mode;
    io::write_simulation_csv((fs::path(g.out) / (stem + ".csv")).string(), log);
    io::write_simulation_aggregate_json((fs::path(g.out) / (stem + ".json")).string(), policy.name, log);
    int fallbacks = 0;
    for (const auto& ep : log.episodes) fallbacks += ep.fallback_count;
    std::cout << "episodes=" << log.episodes.size() << " fallbacks=" << fallbacks << " wrote " << stem
              << ".csv\n";
    return fallbacks == 0 ? kExitOk : kExitSolver;
  }

  if (cmd_report->parsed()) {
    std::vector<std::string> names;
    std::vector<std::vector<io::SimulationRow>> logs;
    for (const auto& f : log_files) {
      names.push_back(fs::path(f).stem().string());
      logs.push_back(io::read_simulation_csv(f));
    }
    io::write_report(g.out, names, logs);
    std::cout << "wrote " << (fs::path(g.out) / "report.md").string() << "\n";
    return kExitOk;
  }

  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const CLI::Error&) {
    return kExitValidation;  // CLI11_PARSE already printed usage
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::domain_error& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
}
