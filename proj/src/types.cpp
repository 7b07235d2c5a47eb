#include "evbal/types.hpp"

#include <algorithm>
#include <stdexcept>

namespace evbal {

namespace {

void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

void check_square(const Matrix& m, int n, const std::string& name) {
  require(m.rows() == n && m.cols() == n, name + ": expected " + std::to_string(n) + "x" + std::to_string(n));
}

}  // namespace

bool CityModel::has_station(int region) const {
  return std::binary_search(charging_regions.begin(), charging_regions.end(), region);
}

void CityModel::validate() const {
  require(n_regions > 0, "city: n_regions must be positive");
  require(intervals_per_day > 0, "city: intervals_per_day must be positive");
  require(horizon > 0, "city: horizon must be positive");
  require(!charging_regions.empty(), "city: at least one charging region required");
  require(std::is_sorted(charging_regions.begin(), charging_regions.end()), "city: charging_regions must be sorted");
  for (int r : charging_regions) require(r >= 0 && r < n_regions, "city: charging region out of range");
  check_square(vacant_cost, n_regions, "city: vacant_cost");
  check_square(lowbatt_cost, n_regions, "city: lowbatt_cost");
  for (int i = 0; i < n_regions; ++i) {
    require(vacant_cost(i, i) == 0.0, "city: vacant_cost diagonal must be zero");
    double d = lowbatt_cost(i, i);
    require(d == 0.0 || (d == kBlockedCost && !has_station(i)),
            "city: lowbatt_cost diagonal must be zero on station regions");
    for (int j = 0; j < n_regions; ++j) {
      require(vacant_cost(i, j) >= 0, "city: vacant_cost must be nonnegative");
      require(lowbatt_cost(i, j) >= 0, "city: lowbatt_cost must be nonnegative");
      if (!has_station(j))
        require(lowbatt_cost(i, j) == kBlockedCost,
                "city: lowbatt_cost into a region without stations must be the blocked sentinel");
    }
  }
  require(move_limit_vacant > 0, "city: move_limit_vacant must be positive");
  require(move_limit_lowbatt > 0, "city: move_limit_lowbatt must be positive");
  if (ratio_lower.size() > 0 || ratio_upper.size() > 0) {
    require(ratio_lower.size() == horizon && ratio_upper.size() == horizon,
            "city: ratio bounds must have one entry per horizon step");
    for (int k = 0; k < horizon; ++k) {
      require(ratio_lower(k) >= 0, "city: ratio_lower must be nonnegative");
      require(ratio_lower(k) <= ratio_upper(k), "city: ratio_lower must not exceed ratio_upper");
    }
  }
  require(charge_weight > 0, "city: charge_weight must be positive");
  require(fairness_weight > 0, "city: fairness_weight must be positive");
  require(fairness_power > 0, "city: fairness_power must be positive");
  require(t_floor > 0, "city: t_floor must be positive");
}

void KernelSlice::validate(double tol) const {
  const Eigen::Index n = p_vacant.rows();
  for (const Matrix* m : {&p_vacant, &p_occupied, &p_lowbatt, &q_vacant, &q_occupied}) {
    if (m->rows() != n || m->cols() != n) throw std::invalid_argument("kernel: matrices must share one square shape");
    if ((m->array() < -tol).any()) throw std::invalid_argument("kernel: negative transition probability");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    double p_sum = p_vacant.row(i).sum() + p_occupied.row(i).sum() + p_lowbatt.row(i).sum();
    double q_sum = q_vacant.row(i).sum() + q_occupied.row(i).sum();
    if (std::abs(p_sum - 1.0) > tol) throw std::invalid_argument("kernel: P row " + std::to_string(i) + " does not sum to 1");
    if (std::abs(q_sum - 1.0) > tol) throw std::invalid_argument("kernel: Q row " + std::to_string(i) + " does not sum to 1");
  }
}

void TransitionKernel::validate(double tol) const {
  if (slices.empty()) throw std::invalid_argument("kernel: no slices");
  for (const auto& s : slices) s.validate(tol);
}

FleetState FleetState::zero(int n_regions) {
  FleetState s;
  s.vacant = Vector::Zero(n_regions);
  s.occupied = Vector::Zero(n_regions);
  s.lowbatt = Vector::Zero(n_regions);
  s.in_charging = Vector::Zero(n_regions);
  return s;
}

double FleetState::total() const {
  double t = vacant.sum() + occupied.sum() + lowbatt.sum();
  if (in_charging.size() > 0) t += in_charging.sum();
  return t;
}

void FleetState::validate() const {
  for (const Vector* v : {&vacant, &occupied, &lowbatt}) {
    if (v->size() != vacant.size()) throw std::invalid_argument("fleet state: inconsistent lengths");
    if (!v->allFinite() || (v->array() < 0).any()) throw std::invalid_argument("fleet state: entries must be finite and nonnegative");
  }
  if (in_charging.size() > 0) {
    if (in_charging.size() != vacant.size()) throw std::invalid_argument("fleet state: inconsistent lengths");
    if (!in_charging.allFinite() || (in_charging.array() < 0).any())
      throw std::invalid_argument("fleet state: entries must be finite and nonnegative");
  }
}

BalancingDecision BalancingDecision::zero(int n_regions, int horizon) {
  BalancingDecision d;
  for (int k = 0; k < horizon; ++k) {
    d.vacant_moves.push_back(Matrix::Zero(n_regions, n_regions));
    d.lowbatt_moves.push_back(Matrix::Zero(n_regions, n_regions));
    d.post_supply.push_back(Vector::Zero(n_regions));
    d.net_charging_inflow.push_back(Vector::Zero(n_regions));
  }
  return d;
}

Vector net_inflow(const Matrix& moves) {
  return moves.colwise().sum().transpose() - moves.rowwise().sum();
}

Vector post_balancing_supply(const Matrix& vacant_moves, const Vector& vacant) {
  if (vacant_moves.rows() != vacant.size()) throw std::invalid_argument("post_balancing_supply: dimension mismatch");
  return vacant + net_inflow(vacant_moves);
}

Vector net_charging_inflow(const Matrix& lowbatt_moves, const CityModel& city) {
  Vector t = net_inflow(lowbatt_moves);
  for (int i = 0; i < city.n_regions; ++i)
    if (!city.has_station(i)) t(i) = 0.0;
  return t;
}

}  // namespace evbal
