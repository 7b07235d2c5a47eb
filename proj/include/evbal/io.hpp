#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "evbal/simulator.hpp"
#include "evbal/types.hpp"

namespace evbal::io {

// Synthetic city/scenario/history generator standing in for real fleet
// data. Deterministic per seed.
struct GeneratorSpec {
  int n_regions = 4;
  int intervals_per_day = 12;
  int horizon = 2;
  int n_stations = 2;
  int fleet_size = 160;
  int history_days = 30;
  double demand_scale = 8.0;   // peak mean demand per region-interval
  double demand_noise = 0.35;      // relative sd for truncated-normal demand
  double demand_noise_abs = 0.0;   // absolute sd floor added on top
  bool poisson_demand = false;
  double lowbatt_share = 0.06;   // mean probability a vacant EV turns low-battery
  double charge_weight = 0.5;    // beta
  double fairness_weight = 2.0;  // theta
  double fairness_power = 1.0;   // a
  double t_floor = 1e-3;
  int episode_len = 12;
  std::uint64_t seed = 1;
};

// Writes regions.csv, costs.csv, city.json, kernel.json, scenario.json,
// history_demand.csv and history_supply.csv under `out_dir`.
void gen_data(const GeneratorSpec& spec, const std::string& out_dir);

// Builds the full in-memory scenario for a generator spec (same content as
// gen_data writes, without touching the filesystem).
struct GeneratedWorld {
  ScenarioConfig scenario;
  Matrix history_demand;  // rows x N
  Matrix history_supply;
};
GeneratedWorld generate_world(const GeneratorSpec& spec);

CityModel load_city(const std::string& dir);
void write_city(const std::string& dir, const CityModel& city);

TransitionKernel load_kernel(const std::string& path);
void write_kernel(const std::string& path, const TransitionKernel& kernel);

ScenarioConfig load_scenario(const std::string& dir);  // reads city + kernel + scenario.json
void write_scenario(const std::string& dir, const ScenarioConfig& scenario);

Matrix load_history_csv(const std::string& path, int n_regions);
void write_history_csv(const std::string& path, const Matrix& observations);

void write_simulation_csv(const std::string& path, const SimulationLog& log);
void write_simulation_aggregate_json(const std::string& path, const std::string& policy_name,
                                     const SimulationLog& log);

// Lean view of a simulation CSV for reporting.
struct SimulationRow {
  int episode = 0, interval = 0;
  double m_balancing = 0, m_mobility = 0, m_charging = 0, solve_ms = 0;
  int flags = 0;
};
std::vector<SimulationRow> read_simulation_csv(const std::string& path);

void write_decision_csv(const std::string& path, const BalancingDecision& decision);
void write_solution_json(const std::string& path, const BalancingSolution& solution);

// Markdown + CSV comparison of policy logs, relative to the last file
// (the baseline).
void write_report(const std::string& out_dir, const std::vector<std::string>& names,
                  const std::vector<std::vector<SimulationRow>>& logs);

}  // namespace evbal::io
