#include "evbal/ratio_bounds.hpp"

#include <algorithm>
#include <stdexcept>

namespace evbal {

namespace {

// Min and max of r_i / s_i over usable regions.
std::pair<double, double> ratio_range(const Vector& demand, const Vector& supply) {
  if (demand.size() != supply.size()) throw std::invalid_argument("ratio bounds: dimension mismatch");
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < demand.size(); ++i) {
    if (supply(i) <= 0) {
      if (demand(i) <= 0) continue;  // 0/0: no information
      continue;                      // positive demand over zero supply: unbounded, skip
    }
    double r = demand(i) / supply(i);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (!(lo <= hi)) throw std::domain_error("ratio bounds: no region admits a finite demand/supply ratio");
  return {lo, hi};
}

}  // namespace

RatioBounds compute_ratio_bounds(const std::vector<Vector>& history_demand,
                                 const std::vector<Vector>& history_supply, bool tighten,
                                 const RelaxedSolveFn& solve) {
  if (history_demand.size() != history_supply.size() || history_demand.empty())
    throw std::invalid_argument("ratio bounds: empty or mismatched history");
  const int steps = static_cast<int>(history_demand.size());

  RatioBounds global;
  global.lower = Vector(steps);
  global.upper = Vector(steps);
  for (int k = 0; k < steps; ++k) {
    auto [lo, hi] = ratio_range(history_demand[k], history_supply[k]);
    global.lower(k) = std::max(0.0, lo);
    global.upper(k) = hi;
  }
  if (!tighten) return global;
  if (!solve) throw std::invalid_argument("ratio bounds: tighten requires a relaxed-solve callback");

  auto relaxed = solve(global);
  if (!relaxed) return global;  // global bounds could not be certified tighter
  if (static_cast<int>(relaxed->size()) != steps)
    throw std::invalid_argument("ratio bounds: relaxed solve returned wrong number of steps");

  RatioBounds tightened;
  tightened.lower = Vector(steps);
  tightened.upper = Vector(steps);
  for (int k = 0; k < steps; ++k) {
    auto [lo, hi] = ratio_range(history_demand[k], (*relaxed)[k]);
    tightened.lower(k) = std::max(global.lower(k), lo);
    tightened.upper(k) = std::min(global.upper(k), hi);
    if (tightened.lower(k) > tightened.upper(k)) return global;
  }
  if (!solve(tightened)) return global;  // verification solve must stay feasible
  return tightened;
}

}  // namespace evbal
