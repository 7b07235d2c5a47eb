// Python bindings for the fleet balancing engine: domain types, forecast
// and uncertainty estimation, the conic pipeline and the simulator.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "evbal/dynamics.hpp"
#include "evbal/io.hpp"
#include "evbal/metrics.hpp"
#include "evbal/ratio_bounds.hpp"
#include "evbal/reformulation.hpp"
#include "evbal/simulator.hpp"
#include "evbal/uncertainty.hpp"

namespace py = pybind11;
using namespace evbal;

namespace {

PredictorSpec predictor_from_string(const std::string& text, int period) {
  PredictorSpec spec;
  spec.period = period;
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
    throw std::invalid_argument("predictor: expected persistence|seasonal|ma:W|ar:P");
  }
  return spec;
}

Policy make_policy_impl(const io::GeneratedWorld& world, const std::string& mode,
                        const std::string& predictor, const EstimationReport* demand_report,
                        const EstimationReport* supply_report, bool conservative, double tol) {
  Policy p;
  ProgramMode m = program_mode_from_string(mode);
  p.kind = m == ProgramMode::counterpart ? Policy::Kind::dro_counterpart
           : m == ProgramMode::theorem1_block ? Policy::Kind::dro_theorem1
                                              : Policy::Kind::non_robust;
  p.name = mode;
  PredictorSpec spec = predictor_from_string(predictor, world.scenario.city.intervals_per_day);
  SeriesHistory demand_hist{world.history_demand, DemandSupplyVector::Role::demand, 60};
  SeriesHistory supply_hist{world.history_supply, DemandSupplyVector::Role::supply, 60};
  p.demand_predictor = fit(spec, demand_hist);
  p.supply_predictor = fit(spec, supply_hist);
  p.demand_history = world.history_demand;
  p.supply_history = world.history_supply;
  if (p.kind != Policy::Kind::non_robust) {
    if (!demand_report || !supply_report)
      throw std::invalid_argument("robust policies need demand and supply estimation reports");
    p.demand_report = *demand_report;
    p.supply_report = *supply_report;
  }
  p.conservative = conservative;
  p.options.solve.tol = tol;
  return p;
}

}  // namespace

PYBIND11_MODULE(_evbal, m) {
  m.doc() = "Distributionally robust EV fleet balancing";

  py::class_<CityModel>(m, "CityModel")
      .def(py::init<>())
      .def_readwrite("n_regions", &CityModel::n_regions)
      .def_readwrite("intervals_per_day", &CityModel::intervals_per_day)
      .def_readwrite("horizon", &CityModel::horizon)
      .def_readwrite("charging_regions", &CityModel::charging_regions)
      .def_readwrite("vacant_cost", &CityModel::vacant_cost)
      .def_readwrite("lowbatt_cost", &CityModel::lowbatt_cost)
      .def_readwrite("move_limit_vacant", &CityModel::move_limit_vacant)
      .def_readwrite("move_limit_lowbatt", &CityModel::move_limit_lowbatt)
      .def_readwrite("charge_weight", &CityModel::charge_weight)
      .def_readwrite("fairness_weight", &CityModel::fairness_weight)
      .def_readwrite("fairness_power", &CityModel::fairness_power)
      .def_readwrite("t_floor", &CityModel::t_floor)
      .def("validate", &CityModel::validate)
      .def("has_station", &CityModel::has_station);

  py::class_<KernelSlice>(m, "KernelSlice")
      .def(py::init<>())
      .def_readwrite("p_vacant", &KernelSlice::p_vacant)
      .def_readwrite("p_occupied", &KernelSlice::p_occupied)
      .def_readwrite("p_lowbatt", &KernelSlice::p_lowbatt)
      .def_readwrite("q_vacant", &KernelSlice::q_vacant)
      .def_readwrite("q_occupied", &KernelSlice::q_occupied)
      .def("validate", &KernelSlice::validate, py::arg("tol") = 1e-9);

  py::class_<TransitionKernel>(m, "TransitionKernel")
      .def(py::init<>())
      .def_readwrite("slices", &TransitionKernel::slices)
      .def("validate", &TransitionKernel::validate, py::arg("tol") = 1e-9);

  py::class_<FleetState>(m, "FleetState")
      .def(py::init<>())
      .def_static("zero", &FleetState::zero)
      .def_readwrite("vacant", &FleetState::vacant)
      .def_readwrite("occupied", &FleetState::occupied)
      .def_readwrite("lowbatt", &FleetState::lowbatt)
      .def_readwrite("in_charging", &FleetState::in_charging)
      .def("total", &FleetState::total);

  m.def("step_dynamics",
        py::overload_cast<const FleetState&, const Matrix&, const Matrix&, const Vector&,
                          const KernelSlice&>(&step_dynamics),
        py::arg("state"), py::arg("vacant_moves"), py::arg("lowbatt_moves"), py::arg("realized_supply"),
        py::arg("kernel"));
  m.def("balancing_cost",
        py::overload_cast<const Matrix&, const Matrix&, const CityModel&, double>(&balancing_cost),
        py::arg("vacant_moves"), py::arg("lowbatt_moves"), py::arg("city"), py::arg("tol") = 1e-9);
  m.def("mobility_fairness", &mobility_fairness, py::arg("demand"), py::arg("supply"));
  m.def("charging_fairness", &charging_fairness, py::arg("finished_charging"), py::arg("net_inflow"));
  m.def("charging_unfairness", &charging_unfairness, py::arg("finished_charging"), py::arg("net_inflow"),
        py::arg("power"), py::arg("t_floor"));
  m.def("mse", &mse, py::arg("predicted"), py::arg("actual"));

  py::class_<FittedPredictor>(m, "FittedPredictor")
      .def("min_context", &FittedPredictor::min_context)
      .def("predict_rows", &FittedPredictor::predict_rows, py::arg("context"), py::arg("horizon"))
      .def_property_readonly("ar_coefficients", &FittedPredictor::ar_coefficients);

  m.def(
      "fit",
      [](const std::string& predictor, const Matrix& observations, int period) {
        SeriesHistory hist{observations, DemandSupplyVector::Role::demand, 60};
        return fit(predictor_from_string(predictor, period), hist);
      },
      py::arg("predictor"), py::arg("observations"), py::arg("period") = 24);
  m.def(
      "predict",
      [](const FittedPredictor& p, const Matrix& context, int horizon) {
        return predict(p, context, horizon).point;
      },
      py::arg("fitted"), py::arg("context"), py::arg("horizon"));
  m.def(
      "residuals",
      [](const FittedPredictor& p, const Matrix& observations, int horizon) {
        SeriesHistory hist{observations, DemandSupplyVector::Role::demand, 60};
        return residuals(p, hist, horizon);
      },
      py::arg("fitted"), py::arg("observations"), py::arg("horizon"));

  py::class_<BootstrapConfig>(m, "BootstrapConfig")
      .def(py::init<>())
      .def_readwrite("outer_count", &BootstrapConfig::outer_count)
      .def_readwrite("inner_count", &BootstrapConfig::inner_count)
      .def_readwrite("studentize_count", &BootstrapConfig::studentize_count)
      .def_readwrite("resample_size", &BootstrapConfig::resample_size)
      .def_readwrite("significance", &BootstrapConfig::significance)
      .def_readwrite("confidence", &BootstrapConfig::confidence)
      .def_readwrite("ridge", &BootstrapConfig::ridge)
      .def_readwrite("seed", &BootstrapConfig::seed)
      .def_readwrite("lower_percentile", &BootstrapConfig::lower_percentile)
      .def_readwrite("held_out_residuals", &BootstrapConfig::held_out_residuals)
      .def_readwrite("sum_inner_covariances", &BootstrapConfig::sum_inner_covariances);

  py::class_<EstimationReport>(m, "EstimationReport")
      .def_readonly("sigma_hat", &EstimationReport::sigma_hat)
      .def_readonly("omega_hat", &EstimationReport::omega_hat)
      .def_readonly("gamma_hat", &EstimationReport::gamma_hat)
      .def_readonly("omega_region", &EstimationReport::omega_region)
      .def_readonly("gamma_region", &EstimationReport::gamma_region)
      .def_readonly("omega_per_outer", &EstimationReport::omega_per_outer)
      .def_readonly("gamma_per_outer", &EstimationReport::gamma_per_outer)
      .def_readonly("omega_spread", &EstimationReport::omega_spread)
      .def_readonly("gamma_spread", &EstimationReport::gamma_spread)
      .def("to_json", [](const EstimationReport& r) { return report_to_json(r); });
  m.def("report_from_json", &report_from_json, py::arg("text"));

  m.def("compute_omega", &compute_omega, py::arg("mean_residual"), py::arg("sigma"));
  m.def("compute_gamma", &compute_gamma, py::arg("sample_cov"), py::arg("sigma"));
  m.def("empirical_quantile", &empirical_quantile, py::arg("values"), py::arg("p"));

  m.def(
      "run_estimation",
      [](const Matrix& samples, const BootstrapConfig& config) {
        auto source = [&samples](const std::vector<int>& picked) {
          Matrix rows(static_cast<Eigen::Index>(picked.size()), samples.cols());
          for (std::size_t i = 0; i < picked.size(); ++i)
            rows.row(static_cast<Eigen::Index>(i)) = samples.row(picked[i]);
          return rows;
        };
        return run_estimation(static_cast<int>(samples.rows()), static_cast<int>(samples.cols()), source,
                              config);
      },
      py::arg("samples"), py::arg("config"), "Nested bootstrap over raw residual samples");
  m.def(
      "run_estimation_forecast",
      [](const Matrix& observations, const std::string& predictor, int period, int horizon,
         const BootstrapConfig& config) {
        SeriesHistory hist{observations, DemandSupplyVector::Role::demand, 60};
        return run_estimation(hist, predictor_from_string(predictor, period), horizon, config);
      },
      py::arg("observations"), py::arg("predictor"), py::arg("period"), py::arg("horizon"),
      py::arg("config"), "Nested bootstrap refitting a predictor on each resample");

  py::class_<MomentUncertaintySet>(m, "MomentUncertaintySet")
      .def(py::init<>())
      .def_static("singleton", &MomentUncertaintySet::singleton)
      .def_readwrite("center", &MomentUncertaintySet::center)
      .def_readwrite("covariance", &MomentUncertaintySet::covariance)
      .def_readwrite("omega", &MomentUncertaintySet::omega)
      .def_readwrite("gamma", &MomentUncertaintySet::gamma)
      .def("validate", &MomentUncertaintySet::validate);
  m.def("build_uncertainty_set", &build_uncertainty_set, py::arg("report"), py::arg("center"),
        py::arg("conservative") = false);

  m.def("worst_case_linear_expectation", &worst_case_linear_expectation, py::arg("a"), py::arg("b"),
        py::arg("set"));
  m.def(
      "worst_case_component_bounds",
      [](const MomentUncertaintySet& set) { return worst_case_component_bounds(set); },
      py::arg("set"));
  m.def(
      "worst_case_block_optimum",
      [](const Vector& a, double b, const MomentUncertaintySet& set, double tol) {
        conic::SolveSettings settings;
        settings.tol = tol;
        conic::ConicSolution sol = conic::solve(build_worst_case_block(a, b, set), settings);
        return py::make_tuple(conic::to_string(sol.status), sol.objective, sol.iterations);
      },
      py::arg("a"), py::arg("b"), py::arg("set"), py::arg("tol") = 1e-7,
      "Solve the tractable epigraph block; returns (status, objective, iterations)");
  m.def(
      "solve_program_json",
      [](const std::string& text, double tol) {
        conic::SolveSettings settings;
        settings.tol = tol;
        conic::ConicProgram p = conic::program_from_json(text);
        conic::ConicSolution sol = conic::solve(p, settings);
        return py::make_tuple(conic::to_string(sol.status), sol.objective, sol.primal);
      },
      py::arg("text"), py::arg("tol") = 1e-6);

  py::class_<BalancingSolution>(m, "BalancingSolution")
      .def_property_readonly("status", [](const BalancingSolution& s) { return conic::to_string(s.status); })
      .def_readonly("objective", &BalancingSolution::objective)
      .def_readonly("solve_ms", &BalancingSolution::solve_ms)
      .def_readonly("relaxation_amount", &BalancingSolution::relaxation_amount)
      .def_property_readonly("vacant_moves",
                             [](const BalancingSolution& s) { return s.decision.vacant_moves; })
      .def_property_readonly("lowbatt_moves",
                             [](const BalancingSolution& s) { return s.decision.lowbatt_moves; })
      .def_property_readonly("post_supply",
                             [](const BalancingSolution& s) { return s.decision.post_supply; })
      .def_property_readonly("net_charging_inflow",
                             [](const BalancingSolution& s) { return s.decision.net_charging_inflow; })
      .def_property_readonly("ratio_bounds", [](const BalancingSolution& s) {
        return py::make_tuple(s.bounds.lower, s.bounds.upper);
      });

  m.def(
      "solve_balancing",
      [](const CityModel& city, const TransitionKernel& kernel, const FleetState& state,
         const Vector& demand_forecast, const Vector& supply_forecast, const MomentUncertaintySet& demand_set,
         const MomentUncertaintySet& supply_set, const std::string& mode, double tol, bool tighten) {
        BalancingOptions options;
        options.mode = program_mode_from_string(mode);
        options.solve.tol = tol;
        options.tighten_bounds = tighten;
        return solve_balancing(city, kernel, state, demand_forecast, supply_forecast, demand_set,
                               supply_set, options);
      },
      py::arg("city"), py::arg("kernel"), py::arg("state"), py::arg("demand_forecast"),
      py::arg("supply_forecast"), py::arg("demand_set"), py::arg("supply_set"),
      py::arg("mode") = "counterpart", py::arg("tol") = 1e-6, py::arg("tighten") = true);

  py::class_<ScenarioConfig>(m, "ScenarioConfig")
      .def_readwrite("city", &ScenarioConfig::city)
      .def_readwrite("episode_len", &ScenarioConfig::episode_len)
      .def_readwrite("seed", &ScenarioConfig::seed)
      .def_property(
          "shift",
          [](const ScenarioConfig& s) { return py::make_tuple(s.shift.mean_factor, s.shift.sd_factor); },
          [](ScenarioConfig& s, py::tuple t) {
            s.shift.mean_factor = t[0].cast<double>();
            s.shift.sd_factor = t[1].cast<double>();
          });

  py::class_<io::GeneratedWorld>(m, "GeneratedWorld")
      .def_readwrite("scenario", &io::GeneratedWorld::scenario)
      .def_readonly("history_demand", &io::GeneratedWorld::history_demand)
      .def_readonly("history_supply", &io::GeneratedWorld::history_supply);

  m.def(
      "generate_world",
      [](int regions, int intervals, int horizon, int stations, int fleet, int days, double scale,
         double noise, int episode_len, std::uint64_t seed) {
        io::GeneratorSpec spec;
        spec.n_regions = regions;
        spec.intervals_per_day = intervals;
        spec.horizon = horizon;
        spec.n_stations = stations;
        spec.fleet_size = fleet;
        spec.history_days = days;
        spec.demand_scale = scale;
        spec.demand_noise = noise;
        spec.episode_len = episode_len;
        spec.seed = seed;
        return io::generate_world(spec);
      },
      py::arg("regions") = 4, py::arg("intervals") = 12, py::arg("horizon") = 2, py::arg("stations") = 2,
      py::arg("fleet") = 160, py::arg("days") = 30, py::arg("scale") = 8.0, py::arg("noise") = 0.35,
      py::arg("episode_len") = 12, py::arg("seed") = 1);
  m.def(
      "gen_data",
      [](const std::string& out_dir, int regions, int intervals, int horizon, int stations, int fleet,
         int days, std::uint64_t seed) {
        io::GeneratorSpec spec;
        spec.n_regions = regions;
        spec.intervals_per_day = intervals;
        spec.horizon = horizon;
        spec.n_stations = stations;
        spec.fleet_size = fleet;
        spec.history_days = days;
        spec.seed = seed;
        io::gen_data(spec, out_dir);
      },
      py::arg("out_dir"), py::arg("regions") = 4, py::arg("intervals") = 12, py::arg("horizon") = 2,
      py::arg("stations") = 2, py::arg("fleet") = 160, py::arg("days") = 30, py::arg("seed") = 1);

  py::class_<Policy>(m, "Policy").def_readwrite("decision_period", &Policy::decision_period);
  m.def("make_policy", &make_policy_impl, py::arg("world"), py::arg("mode"),
        py::arg("predictor") = "persistence", py::arg("demand_report") = nullptr,
        py::arg("supply_report") = nullptr, py::arg("conservative") = false, py::arg("tol") = 1e-6);

  py::class_<EpisodeStats>(m, "EpisodeStats")
      .def_readonly("episode", &EpisodeStats::episode)
      .def_readonly("daily_cost", &EpisodeStats::daily_cost)
      .def_readonly("mean_mobility", &EpisodeStats::mean_mobility)
      .def_readonly("mean_charging", &EpisodeStats::mean_charging)
      .def_readonly("fallback_count", &EpisodeStats::fallback_count);

  py::class_<IntervalRecord>(m, "IntervalRecord")
      .def_readonly("episode", &IntervalRecord::episode)
      .def_readonly("interval", &IntervalRecord::interval)
      .def_readonly("realized_demand", &IntervalRecord::realized_demand)
      .def_readonly("realized_supply", &IntervalRecord::realized_supply)
      .def_readonly("m_balancing", &IntervalRecord::m_balancing)
      .def_readonly("m_mobility", &IntervalRecord::m_mobility)
      .def_readonly("m_charging", &IntervalRecord::m_charging)
      .def_readonly("flags", &IntervalRecord::flags);

  py::class_<SimulationLog>(m, "SimulationLog")
      .def_readonly("records", &SimulationLog::records)
      .def_readonly("episodes", &SimulationLog::episodes)
      .def_readonly("fleet_total", &SimulationLog::fleet_total);

  m.def("run_receding_horizon", &run_receding_horizon, py::arg("policy"), py::arg("scenario"),
        py::arg("episodes"));
}
