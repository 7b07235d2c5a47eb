#pragma once

#include "evbal/types.hpp"

namespace evbal {

// One interval of the fleet recursion:
//   S    = V + net inflow of X
//   V'   = P_v' S + Q_v' O + c
//   O'   = P_o' S + Q_o' O
//   L'   = net inflow of Y + P_l' S
// Tiny negative results (> -1e-9) are clamped to zero. The in_charging
// component passes through unchanged; the simulator owns it.
FleetState step_dynamics(const FleetState& state, const Matrix& vacant_moves,
                         const Matrix& lowbatt_moves, const Vector& realized_supply,
                         const KernelSlice& kernel);

FleetState step_dynamics(const FleetState& state, const BalancingDecision& decision,
                         const Vector& realized_supply, const TransitionKernel& kernel, int interval);

// Supply trajectory over `horizon` intervals with zero balancing decisions,
// starting from `state` at interval-of-day `interval0` and using the given
// per-step supply vectors. Used to seed the ratio bounds.
std::vector<Vector> unbalanced_supply_rollout(const FleetState& state, const TransitionKernel& kernel,
                                              const std::vector<Vector>& supply, int horizon, int interval0);

}  // namespace evbal
