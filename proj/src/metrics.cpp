#include "evbal/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace evbal {

double balancing_cost(const Matrix& vacant_moves, const Matrix& lowbatt_moves, const CityModel& city,
                      double tol) {
  const int n = city.n_regions;
  if (vacant_moves.rows() != n || lowbatt_moves.rows() != n)
    throw std::invalid_argument("balancing_cost: dimension mismatch");
  double cost = 0;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double x = vacant_moves(i, j);
      double y = lowbatt_moves(i, j);
      if (city.vacant_arc_blocked(i, j)) {
        if (std::abs(x) > tol) throw std::domain_error("balancing_cost: flow on a blocked vacant arc");
      } else {
        cost += x * city.vacant_cost(i, j);
      }
      if (city.lowbatt_arc_blocked(i, j)) {
        if (std::abs(y) > tol) throw std::domain_error("balancing_cost: flow on a blocked low-battery arc");
      } else {
        cost += city.charge_weight * y * city.lowbatt_cost(i, j);
      }
    }
  }
  return cost;
}

double balancing_cost(const BalancingDecision& decision, const CityModel& city, int k, double tol) {
  if (k < 0 || k >= decision.horizon()) throw std::invalid_argument("balancing_cost: interval out of range");
  return balancing_cost(decision.vacant_moves[k], decision.lowbatt_moves[k], city, tol);
}

namespace {

double ratio_gap(const Vector& num, const Vector& den) {
  if (num.size() != den.size() || num.size() == 0) throw std::invalid_argument("fairness: dimension mismatch");
  if ((den.array() <= 0).any()) throw std::domain_error("fairness: nonpositive denominator");
  double global = num.sum() / den.sum();
  double gap = 0;
  for (Eigen::Index i = 0; i < num.size(); ++i) gap += std::abs(num(i) / den(i) - global);
  return -gap;
}

}  // namespace

double mobility_fairness(const Vector& demand, const Vector& supply) { return ratio_gap(demand, supply); }

double charging_fairness(const Vector& finished_charging, const Vector& net_inflow) {
  return ratio_gap(finished_charging, net_inflow);
}

double charging_unfairness(const Vector& finished_charging, const Vector& net_inflow, double power,
                           double t_floor) {
  if (finished_charging.size() != net_inflow.size()) throw std::invalid_argument("charging_unfairness: dimension mismatch");
  if (power <= 0) throw std::invalid_argument("charging_unfairness: power must be positive");
  double total = 0;
  for (Eigen::Index i = 0; i < net_inflow.size(); ++i) {
    if (net_inflow(i) < t_floor - 1e-12) throw std::domain_error("charging_unfairness: net inflow below floor");
    total += finished_charging(i) / std::pow(net_inflow(i), power);
  }
  return total;
}

double mse(const Vector& predicted, const Vector& actual) {
  if (predicted.size() != actual.size() || predicted.size() == 0)
    throw std::invalid_argument("mse: length mismatch");
  return (predicted - actual).squaredNorm() / static_cast<double>(predicted.size());
}

}  // namespace evbal
