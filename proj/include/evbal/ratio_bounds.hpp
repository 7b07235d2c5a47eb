#pragma once

#include <functional>
#include <optional>

#include "evbal/types.hpp"

namespace evbal {

struct RatioBounds {
  Vector lower;  // l, per horizon step
  Vector upper;  // h, per horizon step
};

// Solves the balancing problem under candidate bounds and returns the
// optimal post-balancing supply per step, or nullopt when infeasible.
using RelaxedSolveFn = std::function<std::optional<std::vector<Vector>>(const RatioBounds&)>;

// Per-step demand/supply ratio bounds. Global bounds are the min and max of
// r_i/S_i over regions with positive supply (regions with zero supply and
// zero demand are skipped). With `tighten` set, the relaxed problem is
// solved at the global bounds and the bounds are pulled in to the ratio
// range achieved by its optimum; a verification solve guarantees the
// returned bounds stay feasible.
RatioBounds compute_ratio_bounds(const std::vector<Vector>& history_demand,
                                 const std::vector<Vector>& history_supply, bool tighten = false,
                                 const RelaxedSolveFn& solve = nullptr);

}  // namespace evbal
