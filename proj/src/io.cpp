#include "evbal/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evbal/dynamics.hpp"
#include "evbal/rng.hpp"
#include "json.hpp"

namespace evbal::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSchemaLine = "# schema=1";

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.precision(17);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  return in;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j.at(i).get<double>();
  return v;
}

}  // namespace

void write_city(const std::string& dir, const CityModel& city) {
  fs::create_directories(dir);

  {
    auto out = open_out((fs::path(dir) / "regions.csv").string());
    out << kSchemaLine << "\nregion_id,has_station,ports\n";
    for (int i = 0; i < city.n_regions; ++i)
      out << i << "," << (city.has_station(i) ? 1 : 0) << "," << 0 << "\n";
  }
  {
    auto out = open_out((fs::path(dir) / "costs.csv").string());
    out << kSchemaLine << "\nfrom,to,vacant_cost,lowbatt_cost\n";
    for (int i = 0; i < city.n_regions; ++i)
      for (int j = 0; j < city.n_regions; ++j) {
        out << i << "," << j << "," << city.vacant_cost(i, j) << ",";
        if (city.lowbatt_cost(i, j) == kBlockedCost)
          out << "inf";
        else
          out << city.lowbatt_cost(i, j);
        out << "\n";
      }
  }
  json j;
  j["n_regions"] = city.n_regions;
  j["intervals_per_day"] = city.intervals_per_day;
  j["horizon"] = city.horizon;
  j["charging_regions"] = city.charging_regions;
  j["move_limit_vacant"] = city.move_limit_vacant;
  j["move_limit_lowbatt"] = city.move_limit_lowbatt;
  j["charge_weight"] = city.charge_weight;
  j["fairness_weight"] = city.fairness_weight;
  j["fairness_power"] = city.fairness_power;
  j["t_floor"] = city.t_floor;
  if (city.ratio_lower.size() > 0) {
    j["ratio_lower"] = vector_to_json(city.ratio_lower);
    j["ratio_upper"] = vector_to_json(city.ratio_upper);
  }
  open_out((fs::path(dir) / "city.json").string()) << j.dump(2) << "\n";
}

CityModel load_city(const std::string& dir) {
  json j = json::parse(open_in((fs::path(dir) / "city.json").string()));
  CityModel city;
  city.n_regions = j.at("n_regions").get<int>();
  city.intervals_per_day = j.at("intervals_per_day").get<int>();
  city.horizon = j.at("horizon").get<int>();
  city.charging_regions = j.at("charging_regions").get<std::vector<int>>();
  city.move_limit_vacant = j.at("move_limit_vacant").get<double>();
  city.move_limit_lowbatt = j.at("move_limit_lowbatt").get<double>();
  city.charge_weight = j.at("charge_weight").get<double>();
  city.fairness_weight = j.at("fairness_weight").get<double>();
  city.fairness_power = j.at("fairness_power").get<double>();
  city.t_floor = j.at("t_floor").get<double>();
  if (j.contains("ratio_lower")) {
    city.ratio_lower = vector_from_json(j.at("ratio_lower"));
    city.ratio_upper = vector_from_json(j.at("ratio_upper"));
  }

  city.vacant_cost = Matrix::Zero(city.n_regions, city.n_regions);
  city.lowbatt_cost = Matrix::Zero(city.n_regions, city.n_regions);
  auto in = open_in((fs::path(dir) / "costs.csv").string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("from", 0) == 0) continue;
    auto f = split_csv(line);
    int a = std::stoi(f.at(0)), b = std::stoi(f.at(1));
    city.vacant_cost(a, b) = std::stod(f.at(2));
    city.lowbatt_cost(a, b) = f.at(3) == "inf" ? kBlockedCost : std::stod(f.at(3));
  }
  city.validate();
  return city;
}

void write_kernel(const std::string& path, const TransitionKernel& kernel) {
  json j;
  j["intervals"] = json::array();
  for (const auto& s : kernel.slices) {
    json slice;
    slice["p_vacant"] = matrix_to_json(s.p_vacant);
    slice["p_occupied"] = matrix_to_json(s.p_occupied);
    slice["p_lowbatt"] = matrix_to_json(s.p_lowbatt);
    slice["q_vacant"] = matrix_to_json(s.q_vacant);
    slice["q_occupied"] = matrix_to_json(s.q_occupied);
    j["intervals"].push_back(slice);
  }
  open_out(path) << j.dump() << "\n";
}

TransitionKernel load_kernel(const std::string& path) {
  json j = json::parse(open_in(path));
  TransitionKernel kernel;
  for (const auto& slice : j.at("intervals")) {
    KernelSlice s;
    s.p_vacant = matrix_from_json(slice.at("p_vacant"));
    s.p_occupied = matrix_from_json(slice.at("p_occupied"));
    s.p_lowbatt = matrix_from_json(slice.at("p_lowbatt"));
    s.q_vacant = matrix_from_json(slice.at("q_vacant"));
    s.q_occupied = matrix_from_json(slice.at("q_occupied"));
    kernel.slices.push_back(std::move(s));
  }
  kernel.validate();
  return kernel;
}

void write_scenario(const std::string& dir, const ScenarioConfig& scenario) {
  fs::create_directories(dir);
  write_city(dir, scenario.city);
  write_kernel((fs::path(dir) / "kernel.json").string(), scenario.kernel);
  json j;
  j["demand_kind"] = scenario.demand.kind == DemandLaw::Kind::poisson ? "poisson" : "trunc_normal";
  j["demand_mean"] = matrix_to_json(scenario.demand.mean);
  if (scenario.demand.kind == DemandLaw::Kind::trunc_normal) j["demand_sd"] = matrix_to_json(scenario.demand.sd);
  j["ports"] = scenario.charging.ports;
  j["extra_duration_rate"] = scenario.charging.extra_duration_rate;
  j["max_duration"] = scenario.charging.max_duration;
  j["shift_mean_factor"] = scenario.shift.mean_factor;
  j["shift_sd_factor"] = scenario.shift.sd_factor;
  j["initial_vacant"] = vector_to_json(scenario.initial.vacant);
  j["initial_occupied"] = vector_to_json(scenario.initial.occupied);
  j["initial_lowbatt"] = vector_to_json(scenario.initial.lowbatt);
  j["episode_len"] = scenario.episode_len;
  j["seed"] = scenario.seed;
  open_out((fs::path(dir) / "scenario.json").string()) << j.dump(2) << "\n";
}

ScenarioConfig load_scenario(const std::string& dir) {
  ScenarioConfig scenario;
  scenario.city = load_city(dir);
  scenario.kernel = load_kernel((fs::path(dir) / "kernel.json").string());
  json j = json::parse(open_in((fs::path(dir) / "scenario.json").string()));
  scenario.demand.kind =
      j.at("demand_kind").get<std::string>() == "poisson" ? DemandLaw::Kind::poisson : DemandLaw::Kind::trunc_normal;
  scenario.demand.mean = matrix_from_json(j.at("demand_mean"));
  if (j.contains("demand_sd")) scenario.demand.sd = matrix_from_json(j.at("demand_sd"));
  scenario.charging.ports = j.at("ports").get<std::vector<int>>();
  scenario.charging.extra_duration_rate = j.at("extra_duration_rate").get<double>();
  scenario.charging.max_duration = j.at("max_duration").get<int>();
  scenario.shift.mean_factor = j.at("shift_mean_factor").get<double>();
  scenario.shift.sd_factor = j.at("shift_sd_factor").get<double>();
  scenario.initial.vacant = vector_from_json(j.at("initial_vacant"));
  scenario.initial.occupied = vector_from_json(j.at("initial_occupied"));
  scenario.initial.lowbatt = vector_from_json(j.at("initial_lowbatt"));
  scenario.initial.in_charging = Vector::Zero(scenario.city.n_regions);
  scenario.episode_len = j.at("episode_len").get<int>();
  scenario.seed = j.at("seed").get<std::uint64_t>();
  scenario.validate();
  return scenario;
}

Matrix load_history_csv(const std::string& path, int n_regions) {
  auto in = open_in(path);
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("time", 0) == 0) continue;
    auto f = split_csv(line);
    int t = std::stoi(f.at(0));
    int region = std::stoi(f.at(1));
    double count = std::stod(f.at(2));
    if (t >= static_cast<int>(rows.size())) rows.resize(t + 1, std::vector<double>(n_regions, 0.0));
    rows.at(t).at(region) = count;
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), n_regions);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int c = 0; c < n_regions; ++c) m(static_cast<Eigen::Index>(i), c) = rows[i][c];
  return m;
}

void write_history_csv(const std::string& path, const Matrix& observations) {
  auto out = open_out(path);
  out << kSchemaLine << "\ntime,region,count\n";
  for (Eigen::Index t = 0; t < observations.rows(); ++t)
    for (Eigen::Index r = 0; r < observations.cols(); ++r)
      out << t << "," << r << "," << static_cast<long long>(std::llround(observations(t, r))) << "\n";
}

void write_simulation_csv(const std::string& path, const SimulationLog& log) {
  auto out = open_out(path);
  out << kSchemaLine << "\nepisode,k,M_b,M_m,M_c,solve_ms,flags\n";
  for (const auto& r : log.records)
    out << r.episode << "," << r.interval << "," << r.m_balancing << "," << r.m_mobility << ","
        << r.m_charging << "," << r.solve_ms << "," << r.flags << "\n";
}

void write_simulation_aggregate_json(const std::string& path, const std::string& policy_name,
                                     const SimulationLog& log) {
  json j;
  j["policy"] = policy_name;
  j["fleet_total"] = log.fleet_total;
  j["episodes"] = json::array();
  for (const auto& ep : log.episodes)
    j["episodes"].push_back({{"episode", ep.episode},
                             {"daily_cost", ep.daily_cost},
                             {"mean_mobility", ep.mean_mobility},
                             {"mean_charging", ep.mean_charging},
                             {"solve_ms_total", ep.solve_ms_total},
                             {"fallbacks", ep.fallback_count}});
  open_out(path) << j.dump(2) << "\n";
}

std::vector<SimulationRow> read_simulation_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  std::vector<SimulationRow> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("episode", 0) == 0) continue;
    auto f = split_csv(line);
    SimulationRow r;
    r.episode = std::stoi(f.at(0));
    r.interval = std::stoi(f.at(1));
    r.m_balancing = std::stod(f.at(2));
    r.m_mobility = std::stod(f.at(3));
    r.m_charging = std::stod(f.at(4));
    r.solve_ms = std::stod(f.at(5));
    r.flags = std::stoi(f.at(6));
    rows.push_back(r);
  }
  return rows;
}

void write_decision_csv(const std::string& path, const BalancingDecision& decision) {
  auto out = open_out(path);
  out << kSchemaLine << "\nkind,k,from,to,value\n";
  for (int k = 0; k < decision.horizon(); ++k) {
    const Matrix& x = decision.vacant_moves[k];
    const Matrix& y = decision.lowbatt_moves[k];
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (x(i, j) > 1e-9) out << "x," << k << "," << i << "," << j << "," << x(i, j) << "\n";
        if (y(i, j) > 1e-9) out << "y," << k << "," << i << "," << j << "," << y(i, j) << "\n";
      }
  }
}

void write_solution_json(const std::string& path, const BalancingSolution& solution) {
  json j;
  j["status"] = conic::to_string(solution.status);
  j["objective"] = solution.objective;
  j["relaxation_amount"] = solution.relaxation_amount;
  j["solve_ms"] = solution.solve_ms;
  j["iterations"] = solution.iterations;
  j["cut_rounds"] = solution.cut_rounds;
  j["demand_lo"] = vector_to_json(solution.demand_lo);
  j["demand_hi"] = vector_to_json(solution.demand_hi);
  j["supply_lo"] = vector_to_json(solution.supply_lo);
  j["ratio_lower"] = vector_to_json(solution.bounds.lower);
  j["ratio_upper"] = vector_to_json(solution.bounds.upper);
  j["kkt"] = {{"primal_residual", solution.kkt.primal_residual},
              {"dual_residual", solution.kkt.dual_residual},
              {"duality_gap", solution.kkt.duality_gap},
              {"complementarity", solution.kkt.complementarity},
              {"primal_cone_distance", solution.kkt.primal_cone_distance},
              {"dual_cone_distance", solution.kkt.dual_cone_distance}};
  json supply = json::array(), inflow = json::array(), slack_d = json::array(), slack_u = json::array();
  for (const auto& s : solution.decision.post_supply) supply.push_back(vector_to_json(s));
  for (const auto& t : solution.decision.net_charging_inflow) inflow.push_back(vector_to_json(t));
  for (const auto& dv : solution.slacks.d) slack_d.push_back(vector_to_json(dv));
  for (const auto& uv : solution.slacks.u) slack_u.push_back(vector_to_json(uv));
  j["post_supply"] = supply;
  j["net_charging_inflow"] = inflow;
  j["slack_d"] = slack_d;
  j["slack_u"] = slack_u;
  open_out(path) << j.dump(2) << "\n";
}

namespace {

struct LogStats {
  double mean_daily_cost = 0, mean_mobility = 0, mean_charging = 0, mean_solve_ms = 0;
};

LogStats stats_of(const std::vector<SimulationRow>& rows) {
  LogStats s;
  if (rows.empty()) return s;
  std::map<int, double> daily;
  for (const auto& r : rows) {
    daily[r.episode] += r.m_balancing;
    s.mean_mobility += r.m_mobility;
    s.mean_charging += r.m_charging;
    s.mean_solve_ms += r.solve_ms;
  }
  for (auto& [ep, c] : daily) s.mean_daily_cost += c;
  s.mean_daily_cost /= static_cast<double>(daily.size());
  s.mean_mobility /= static_cast<double>(rows.size());
  s.mean_charging /= static_cast<double>(rows.size());
  s.mean_solve_ms /= static_cast<double>(rows.size());
  return s;
}

}  // namespace

void write_report(const std::string& out_dir, const std::vector<std::string>& names,
                  const std::vector<std::vector<SimulationRow>>& logs) {
  if (names.size() != logs.size() || logs.size() < 2)
    throw std::invalid_argument("report: need at least two named logs");
  fs::create_directories(out_dir);

  std::vector<LogStats> stats;
  for (const auto& rows : logs) stats.push_back(stats_of(rows));
  const LogStats& base = stats.back();

  auto pct = [](double ours, double theirs, bool higher_better) {
    if (theirs == 0) return 0.0;
    double delta = higher_better ? (ours - theirs) : (theirs - ours);
    return 100.0 * delta / std::abs(theirs);
  };

  {
    auto md = open_out((fs::path(out_dir) / "report.md").string());
    md << "# Policy comparison\n\nBaseline: " << names.back() << "\n\n";
    md << "| policy | mean daily cost | mean M_m | mean M_c | mean solve ms |\n";
    md << "|---|---|---|---|---|\n";
    for (std::size_t i = 0; i < names.size(); ++i)
      md << "| " << names[i] << " | " << stats[i].mean_daily_cost << " | " << stats[i].mean_mobility
         << " | " << stats[i].mean_charging << " | " << stats[i].mean_solve_ms << " |\n";
    md << "\n## Percent difference vs baseline\n\n";
    md << "| policy | cost reduction % | mobility fairness gain % | charging fairness gain % |\n";
    md << "|---|---|---|---|\n";
    for (std::size_t i = 0; i < names.size(); ++i)
      md << "| " << names[i] << " | " << pct(stats[i].mean_daily_cost, base.mean_daily_cost, false)
         << " | " << pct(stats[i].mean_mobility, base.mean_mobility, true) << " | "
         << pct(stats[i].mean_charging, base.mean_charging, true) << " |\n";
  }
  {
    auto csv = open_out((fs::path(out_dir) / "deltas.csv").string());
    csv << kSchemaLine << "\npolicy,mean_daily_cost,mean_M_m,mean_M_c,cost_reduction_pct,mobility_gain_pct,charging_gain_pct\n";
    for (std::size_t i = 0; i < names.size(); ++i)
      csv << names[i] << "," << stats[i].mean_daily_cost << "," << stats[i].mean_mobility << ","
          << stats[i].mean_charging << "," << pct(stats[i].mean_daily_cost, base.mean_daily_cost, false)
          << "," << pct(stats[i].mean_mobility, base.mean_mobility, true) << ","
          << pct(stats[i].mean_charging, base.mean_charging, true) << "\n";
  }
}

GeneratedWorld generate_world(const GeneratorSpec& spec) {
  if (spec.n_regions < 1 || spec.n_stations < 1 || spec.n_stations > spec.n_regions)
    throw std::invalid_argument("generator: bad region/station counts");
  Rng rng(spec.seed);
  const int n = spec.n_regions;
  const int kday = spec.intervals_per_day;

  GeneratedWorld world;
  CityModel& city = world.scenario.city;
  city.n_regions = n;
  city.intervals_per_day = kday;
  city.horizon = spec.horizon;
  city.charge_weight = spec.charge_weight;
  city.fairness_weight = spec.fairness_weight;
  city.fairness_power = spec.fairness_power;
  city.t_floor = spec.t_floor;

  // Stations spread evenly over the region list.
  for (int s = 0; s < spec.n_stations; ++s) city.charging_regions.push_back(s * n / spec.n_stations);
  std::sort(city.charging_regions.begin(), city.charging_regions.end());
  city.charging_regions.erase(std::unique(city.charging_regions.begin(), city.charging_regions.end()),
                              city.charging_regions.end());

  // Planar coordinates; costs are rounded Euclidean distances.
  Rng geo = rng.fork(1);
  std::vector<std::pair<double, double>> xy;
  for (int i = 0; i < n; ++i) xy.push_back({geo.uniform(0.0, 20.0), geo.uniform(0.0, 20.0)});
  city.vacant_cost = Matrix::Zero(n, n);
  city.lowbatt_cost = Matrix::Zero(n, n);
  double max_dist = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      double d = std::hypot(xy[i].first - xy[j].first, xy[i].second - xy[j].second);
      d = std::round(d * 10.0) / 10.0;
      city.vacant_cost(i, j) = i == j ? 0.0 : d;
      max_dist = std::max(max_dist, d);
      if (city.has_station(j))
        city.lowbatt_cost(i, j) = i == j ? 0.0 : d;
      else
        city.lowbatt_cost(i, j) = kBlockedCost;
    }
  city.move_limit_vacant = max_dist * 0.9 + 1.0;
  city.move_limit_lowbatt = max_dist * 0.9 + 1.0;

  // Row-stochastic kernels: per-origin shares split across distance-decayed
  // destinations.
  Rng kern = rng.fork(2);
  TransitionKernel& kernel = world.scenario.kernel;
  for (int k = 0; k < kday; ++k) {
    KernelSlice slice;
    slice.p_vacant = Matrix::Zero(n, n);
    slice.p_occupied = Matrix::Zero(n, n);
    slice.p_lowbatt = Matrix::Zero(n, n);
    slice.q_vacant = Matrix::Zero(n, n);
    slice.q_occupied = Matrix::Zero(n, n);
    double day_phase = std::sin(2.0 * M_PI * k / kday - 0.7);
    for (int i = 0; i < n; ++i) {
      double serve = std::clamp(0.35 + 0.15 * day_phase + kern.uniform(-0.05, 0.05), 0.1, 0.8);
      double low = std::clamp(spec.lowbatt_share * (0.8 + 0.4 * kern.uniform()), 0.02, 0.3);
      double stay_vacant = 1.0 - serve - low;
      Vector weight(n);
      for (int j = 0; j < n; ++j) weight(j) = std::exp(-city.vacant_cost(i, j) / 8.0) * (0.5 + kern.uniform());
      weight /= weight.sum();
      for (int j = 0; j < n; ++j) {
        slice.p_vacant(i, j) = stay_vacant * weight(j);
        slice.p_occupied(i, j) = serve * weight(j);
        slice.p_lowbatt(i, j) = low * weight(j);
      }
      double finish = std::clamp(0.55 + kern.uniform(-0.1, 0.1), 0.3, 0.9);
      for (int j = 0; j < n; ++j) {
        slice.q_vacant(i, j) = finish * weight(j);
        slice.q_occupied(i, j) = (1.0 - finish) * weight(j);
      }
    }
    kernel.slices.push_back(std::move(slice));
  }

  // Demand law: day curve times a region weight.
  Rng dem = rng.fork(3);
  DemandLaw& law = world.scenario.demand;
  law.kind = spec.poisson_demand ? DemandLaw::Kind::poisson : DemandLaw::Kind::trunc_normal;
  law.mean = Matrix(kday, n);
  law.sd = Matrix(kday, n);
  std::vector<double> region_weight(n);
  for (int i = 0; i < n; ++i) region_weight[i] = 0.4 + dem.uniform();
  for (int k = 0; k < kday; ++k) {
    double curve = 0.55 + 0.45 * std::sin(2.0 * M_PI * k / kday + 0.4);
    for (int i = 0; i < n; ++i) {
      law.mean(k, i) = spec.demand_scale * curve * region_weight[i];
      law.sd(k, i) = std::max(0.5, spec.demand_noise * law.mean(k, i) + spec.demand_noise_abs);
    }
  }

  ChargingModel& charging = world.scenario.charging;
  charging.ports.assign(n, 0);
  int ports_per_station = std::max(2, spec.fleet_size / (6 * std::max(1, (int)city.charging_regions.size())));
  for (int i : city.charging_regions) charging.ports[i] = ports_per_station;
  charging.extra_duration_rate = 0.6;
  charging.max_duration = 4;

  // Initial fleet: spread vacants, some occupied, a few low-battery.
  FleetState& init = world.scenario.initial;
  init = FleetState::zero(n);
  Rng fleet = rng.fork(4);
  int remaining = spec.fleet_size;
  for (int i = 0; i < n; ++i) {
    int v = std::min<int>(remaining, static_cast<int>(fleet.uniform_int(spec.fleet_size / n + 1)) +
                                          spec.fleet_size / (2 * n));
    init.vacant(i) = v;
    remaining -= v;
  }
  init.vacant(0) += remaining;
  for (int i = 0; i < n; ++i) {
    int o = static_cast<int>(std::llround(init.vacant(i) * 0.4));
    init.vacant(i) -= o;
    init.occupied(i) = o;
    int l = static_cast<int>(std::llround(init.vacant(i) * 0.12));
    init.vacant(i) -= l;
    init.lowbatt(i) = l;
  }
  world.scenario.episode_len = spec.episode_len;
  world.scenario.seed = spec.seed;
  world.scenario.validate();

  // Histories: demand straight from the law; supply from a warmup run with
  // a send-to-nearest-station heuristic so the series carries the charging
  // dynamics.
  const int rows = spec.history_days * kday;
  world.history_demand = Matrix(rows, n);
  Rng hist = rng.fork(5);
  ScenarioConfig warm = world.scenario;
  warm.shift = ShiftSpec{};
  for (int t = 0; t < rows; ++t) {
    Vector r = sample_demand(hist, warm, t % kday);
    world.history_demand.row(t) = r.transpose();
  }

  world.history_supply = Matrix::Zero(rows, n);
  {
    Rng warm_rng = rng.fork(6);
    FleetState state = world.scenario.initial;
    std::vector<std::map<int, int>> finish_at(n);
    Vector busy = Vector::Zero(n);
    std::vector<int> nearest(n);
    for (int i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (int s : city.charging_regions)
        if (city.vacant_cost(i, s) < best) {
          best = city.vacant_cost(i, s);
          nearest[i] = s;
        }
    }
    for (int t = 0; t < rows; ++t) {
      const KernelSlice& slice = kernel.at(t);
      // Move all low-battery vehicles to their nearest station, admit up to
      // the free ports, and queue the rest.
      Vector c_real = Vector::Zero(n);
      for (int s : city.charging_regions) {
        auto it = finish_at[s].find(t);
        if (it != finish_at[s].end()) {
          c_real(s) = it->second;
          busy(s) -= it->second;
          finish_at[s].erase(it);
        }
      }
      Vector arriving = Vector::Zero(n);
      for (int i = 0; i < n; ++i) {
        long l = std::llround(state.lowbatt(i));
        arriving(nearest[i]) += static_cast<double>(l);
        state.lowbatt(i) = 0;
      }
      for (int s : city.charging_regions) {
        int free = charging.ports[s] - static_cast<int>(busy(s));
        long admit = std::min<long>(std::llround(arriving(s)), std::max(0, free));
        for (long v = 0; v < admit; ++v) {
          int extra = static_cast<int>(warm_rng.poisson(charging.extra_duration_rate));
          finish_at[s][t + std::min(1 + extra, charging.max_duration)] += 1;
        }
        busy(s) += static_cast<double>(admit);
        arriving(s) -= static_cast<double>(admit);
        state.lowbatt(s) += arriving(s);  // queued, still low-battery
      }
      world.history_supply.row(t) = c_real.transpose();

      Vector v_next = c_real, o_next = Vector::Zero(n), l_new = Vector::Zero(n);
      for (int j = 0; j < n; ++j) {
        long s_count = std::llround(state.vacant(j));
        if (s_count > 0) {
          std::vector<double> w(3 * n);
          for (int i = 0; i < n; ++i) {
            w[i] = slice.p_vacant(j, i);
            w[n + i] = slice.p_occupied(j, i);
            w[2 * n + i] = slice.p_lowbatt(j, i);
          }
          auto counts = warm_rng.multinomial(static_cast<std::uint64_t>(s_count), w);
          for (int i = 0; i < n; ++i) {
            v_next(i) += counts[i];
            o_next(i) += counts[n + i];
            l_new(i) += counts[2 * n + i];
          }
        }
        long o_count = std::llround(state.occupied(j));
        if (o_count > 0) {
          std::vector<double> w(2 * n);
          for (int i = 0; i < n; ++i) {
            w[i] = slice.q_vacant(j, i);
            w[n + i] = slice.q_occupied(j, i);
          }
          auto counts = warm_rng.multinomial(static_cast<std::uint64_t>(o_count), w);
          for (int i = 0; i < n; ++i) {
            v_next(i) += counts[i];
            o_next(i) += counts[n + i];
          }
        }
      }
      state.vacant = v_next;
      state.occupied = o_next;
      state.lowbatt += l_new;
      state.in_charging = busy;
    }
    // Start evaluation episodes from the warmed-up fleet split, with the
    // port queue folded back into the low-battery pool.
    for (int s : city.charging_regions) state.lowbatt(s) += busy(s);
    state.in_charging = Vector::Zero(n);
    world.scenario.initial = state;
    world.scenario.validate();
  }
  return world;
}

void gen_data(const GeneratorSpec& spec, const std::string& out_dir) {
  GeneratedWorld world = generate_world(spec);
  fs::create_directories(out_dir);
  write_scenario(out_dir, world.scenario);
  // Ports belong to the scenario but regions.csv mirrors them for
  // convenience.
  {
    auto out = open_out((fs::path(out_dir) / "regions.csv").string());
    out << kSchemaLine << "\nregion_id,has_station,ports\n";
    for (int i = 0; i < world.scenario.city.n_regions; ++i)
      out << i << "," << (world.scenario.city.has_station(i) ? 1 : 0) << ","
          << world.scenario.charging.ports[i] << "\n";
  }
  write_history_csv((fs::path(out_dir) / "history_demand.csv").string(), world.history_demand);
  write_history_csv((fs::path(out_dir) / "history_supply.csv").string(), world.history_supply);
}

}  // namespace evbal::io
