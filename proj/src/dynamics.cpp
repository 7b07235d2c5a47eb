#include "evbal/dynamics.hpp"

#include <stdexcept>

namespace evbal {

namespace {

Vector clamp_tiny(Vector v) {
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (v(i) < 0 && v(i) > -1e-9) v(i) = 0;
  return v;
}

}  // namespace

FleetState step_dynamics(const FleetState& state, const Matrix& vacant_moves,
                         const Matrix& lowbatt_moves, const Vector& realized_supply,
                         const KernelSlice& kernel) {
  const Eigen::Index n = state.vacant.size();
  if (vacant_moves.rows() != n || vacant_moves.cols() != n || lowbatt_moves.rows() != n ||
      lowbatt_moves.cols() != n || realized_supply.size() != n || kernel.p_vacant.rows() != n)
    throw std::invalid_argument("step_dynamics: dimension mismatch");
  kernel.validate();

  Vector s = state.vacant + net_inflow(vacant_moves);
  FleetState next;
  next.vacant = clamp_tiny(kernel.p_vacant.transpose() * s + kernel.q_vacant.transpose() * state.occupied + realized_supply);
  next.occupied = clamp_tiny(kernel.p_occupied.transpose() * s + kernel.q_occupied.transpose() * state.occupied);
  next.lowbatt = clamp_tiny(net_inflow(lowbatt_moves) + kernel.p_lowbatt.transpose() * s);
  next.in_charging = state.in_charging;
  return next;
}

FleetState step_dynamics(const FleetState& state, const BalancingDecision& decision,
                         const Vector& realized_supply, const TransitionKernel& kernel, int interval) {
  if (decision.horizon() == 0) throw std::invalid_argument("step_dynamics: empty decision");
  int k = interval % decision.horizon();
  return step_dynamics(state, decision.vacant_moves[k], decision.lowbatt_moves[k], realized_supply,
                       kernel.at(interval));
}

std::vector<Vector> unbalanced_supply_rollout(const FleetState& state, const TransitionKernel& kernel,
                                              const std::vector<Vector>& supply, int horizon, int interval0) {
  if (static_cast<int>(supply.size()) < horizon) throw std::invalid_argument("unbalanced_supply_rollout: missing supply steps");
  std::vector<Vector> out;
  out.reserve(horizon);
  Vector v = state.vacant;
  Vector o = state.occupied;
  for (int k = 0; k < horizon; ++k) {
    out.push_back(v);  // S^k = V^k when X = 0
    const KernelSlice& slice = kernel.at(interval0 + k);
    Vector v_next = slice.p_vacant.transpose() * v + slice.q_vacant.transpose() * o + supply[k];
    o = slice.p_occupied.transpose() * v + slice.q_occupied.transpose() * o;
    v = v_next;
  }
  return out;
}

}  // namespace evbal
