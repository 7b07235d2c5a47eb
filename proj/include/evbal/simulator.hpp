#pragma once

#include <cstdint>
#include <map>

#include "evbal/forecast.hpp"
#include "evbal/reformulation.hpp"
#include "evbal/rng.hpp"
#include "evbal/types.hpp"

namespace evbal {

// True demand law per (interval-of-day, region).
struct DemandLaw {
  enum class Kind { trunc_normal, poisson };
  Kind kind = Kind::poisson;
  Matrix mean;  // K x N
  Matrix sd;    // K x N, trunc_normal only
};

// Port-limited FIFO charging: admitted vehicles occupy a port for
// 1 + poisson(extra_duration_rate) intervals (capped) and re-enter the
// vacant pool as realized supply when they finish.
struct ChargingModel {
  std::vector<int> ports;  // per region, 0 where there is no station
  double extra_duration_rate = 0.5;
  int max_duration = 6;
};

struct ShiftSpec {
  double mean_factor = 1.0;
  double sd_factor = 1.0;
};

struct ScenarioConfig {
  CityModel city;
  TransitionKernel kernel;
  DemandLaw demand;
  ChargingModel charging;
  ShiftSpec shift;  // applied to the demand law while simulating
  FleetState initial;  // integer counts; in_charging must be zero
  int episode_len = 24;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Policy {
  enum class Kind { dro_counterpart, dro_theorem1, non_robust };
  Kind kind = Kind::dro_counterpart;
  std::string name;
  FittedPredictor demand_predictor, supply_predictor;
  Matrix demand_history, supply_history;  // trailing training rows for context
  EstimationReport demand_report, supply_report;  // unused for non_robust
  bool conservative = false;
  int decision_period = 1;  // re-solve every p-th interval, idle otherwise
  BalancingOptions options;

  ProgramMode mode() const;
};

struct IntervalRecord {
  int episode = 0;
  int interval = 0;
  Vector realized_demand, realized_supply;
  Matrix vacant_moves, lowbatt_moves;  // executed integer flows
  FleetState state_after;
  double m_balancing = 0, m_mobility = 0, m_charging = 0;
  double m_balancing_planned = 0;  // cost of the continuous first-interval decision
  double solve_ms = 0;
  int flags = 0;  // bit 0: solver fallback, bit 1: metric guard engaged
};

struct EpisodeStats {
  int episode = 0;
  double daily_cost = 0;
  double daily_cost_planned = 0;
  double mean_mobility = 0, mean_charging = 0;
  double solve_ms_total = 0;
  int fallback_count = 0;
};

struct SimulationLog {
  std::vector<IntervalRecord> records;
  std::vector<EpisodeStats> episodes;
  double fleet_total = 0;  // conserved count, audited every interval
};

// Sampled realizations for one interval: demand from the configured law
// (truncated-normal draws are re-drawn, not clamped), supply as the
// vehicles finishing on the port queue this interval.
Vector sample_demand(Rng& rng, const ScenarioConfig& scenario, int interval_of_day);

// Integer dispatch execution: row sums capped at the available count, then
// largest-remainder rounding per origin row.
Eigen::MatrixXi round_dispatch(const Matrix& flows, const Vector& available);

SimulationLog run_receding_horizon(const Policy& policy, const ScenarioConfig& scenario, int episodes);

struct PolicySummary {
  std::string name;
  std::vector<double> daily_costs;
  std::vector<double> mobility_means;
  std::vector<double> charging_means;
  double mean_daily_cost = 0, var_daily_cost = 0;
  double mean_mobility = 0, mean_charging = 0;
  double mean_solve_ms = 0, max_solve_ms = 0;
  int fallback_count = 0;
};

struct ComparisonReport {
  std::vector<PolicySummary> policies;
  // Percent change of each policy relative to the last one (the baseline):
  // positive means the policy improves on the baseline.
  std::vector<double> cost_reduction_pct;
  std::vector<double> mobility_gain_pct;
  std::vector<double> charging_gain_pct;
};

// Paired-seed evaluation: every policy sees identical demand streams.
ComparisonReport compare_policies(const std::vector<Policy>& policies, const ScenarioConfig& scenario,
                                  int episodes);

}  // namespace evbal
