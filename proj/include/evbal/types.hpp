#pragma once

#include <Eigen/Dense>
#include <limits>
#include <string>
#include <vector>

namespace evbal {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Sentinel for arcs that must carry zero flow (e.g. low-battery moves into
// regions without charging stations). Kept finite so constraint data stays
// finite; the program builders turn it into a variable fixing.
inline constexpr double kBlockedCost = std::numeric_limits<double>::max();

// Static description of the city and the balancing problem parameters.
struct CityModel {
  int n_regions = 0;             // N
  int intervals_per_day = 24;    // K
  int horizon = 2;               // tau
  std::vector<int> charging_regions;  // sorted region indices with stations
  Matrix vacant_cost;            // W, N x N
  Matrix lowbatt_cost;           // W*, N x N, kBlockedCost on columns without stations
  double move_limit_vacant = 0;  // m1
  double move_limit_lowbatt = 0; // m2
  Vector ratio_lower;            // l, per horizon step (may be empty: computed per solve)
  Vector ratio_upper;            // h, per horizon step
  double charge_weight = 1.0;    // beta
  double fairness_weight = 1.0;  // theta
  double fairness_power = 1.0;   // a
  double t_floor = 1e-3;         // floor on net charging inflow per station region

  bool has_station(int region) const;
  bool vacant_arc_blocked(int i, int j) const {
    return vacant_cost(i, j) >= move_limit_vacant || vacant_cost(i, j) == kBlockedCost;
  }
  bool lowbatt_arc_blocked(int i, int j) const {
    return lowbatt_cost(i, j) >= move_limit_lowbatt || lowbatt_cost(i, j) == kBlockedCost;
  }

  // Throws std::invalid_argument on a malformed model.
  void validate() const;
};

// Region transition probabilities for one interval.
struct KernelSlice {
  Matrix p_vacant;    // P_v: post-balancing vacant -> vacant
  Matrix p_occupied;  // P_o: post-balancing vacant -> occupied
  Matrix p_lowbatt;   // P_l: post-balancing vacant -> low-battery
  Matrix q_vacant;    // Q_v: occupied -> vacant
  Matrix q_occupied;  // Q_o: occupied -> occupied

  // Row sums of (P_l + P_v + P_o) and (Q_o + Q_v) must equal 1 within tol.
  void validate(double tol = 1e-9) const;
};

struct TransitionKernel {
  std::vector<KernelSlice> slices;  // indexed by interval-of-day

  const KernelSlice& at(int interval) const {
    return slices[static_cast<std::size_t>(interval) % slices.size()];
  }
  void validate(double tol = 1e-9) const;
};

// Fleet counts per region. `in_charging` is a simulator-internal queue and
// is ignored by the optimizer.
struct FleetState {
  Vector vacant;
  Vector occupied;
  Vector lowbatt;
  Vector in_charging;

  static FleetState zero(int n_regions);
  double total() const;
  void validate() const;
};

// Demand or supply vector over the horizon, region-major per interval:
// index (k, i) -> k * N + i.
struct DemandSupplyVector {
  enum class Role { demand, supply };
  Vector values;  // length N * tau
  Role role = Role::demand;
};

// Dispatch decision over the horizon plus derived post-balancing state.
struct BalancingDecision {
  std::vector<Matrix> vacant_moves;         // X^k
  std::vector<Matrix> lowbatt_moves;        // Y^k
  std::vector<Vector> post_supply;          // S^k
  std::vector<Vector> net_charging_inflow;  // T^k, zero off station regions

  int horizon() const { return static_cast<int>(vacant_moves.size()); }
  static BalancingDecision zero(int n_regions, int horizon);
};

// Net flow in: column sums minus row sums.
Vector net_inflow(const Matrix& moves);

// S^k = V^k + net inflow of X^k.
Vector post_balancing_supply(const Matrix& vacant_moves, const Vector& vacant);

// T^k: net Y inflow on station regions, exactly zero elsewhere.
Vector net_charging_inflow(const Matrix& lowbatt_moves, const CityModel& city);

// Slack variables of the mobility-ratio equalities.
struct SlackPair {
  std::vector<Vector> d;  // lower-bound slack, squared closes r - l S
  std::vector<Vector> u;  // upper-bound slack, squared closes h S - r
};

}  // namespace evbal
