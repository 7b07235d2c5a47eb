#pragma once

#include "evbal/types.hpp"

namespace evbal {

// Weighted dispatch cost of interval k: sum of x w + beta * y w*.
// Throws if a blocked arc carries flow above `tol`.
double balancing_cost(const BalancingDecision& decision, const CityModel& city, int k, double tol = 1e-9);
double balancing_cost(const Matrix& vacant_moves, const Matrix& lowbatt_moves, const CityModel& city,
                      double tol = 1e-9);

// Negative total absolute gap between local and global demand/supply ratios.
// Zero iff every local ratio equals the global one. Requires S > 0.
double mobility_fairness(const Vector& demand, const Vector& supply);

// Same shape for charging: c and t are restricted to station regions, t > 0.
double charging_fairness(const Vector& finished_charging, const Vector& net_inflow);

// Smooth charging objective: sum of c_i / t_i^a over station regions.
// Requires t >= t_floor elementwise.
double charging_unfairness(const Vector& finished_charging, const Vector& net_inflow, double power,
                           double t_floor);

// Mean squared prediction error.
double mse(const Vector& predicted, const Vector& actual);

}  // namespace evbal
