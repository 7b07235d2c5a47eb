#pragma once

#include <optional>

#include "evbal/conic/solver.hpp"
#include "evbal/ratio_bounds.hpp"
#include "evbal/types.hpp"
#include "evbal/uncertainty.hpp"

namespace evbal {

enum class ProgramMode { counterpart, theorem1_block, non_robust };
std::string to_string(ProgramMode mode);
ProgramMode program_mode_from_string(const std::string& name);

// Exact supremum of E[a'z + b] over the moment set: b + a'center +
// sqrt(omega) * ||Sigma^{1/2} a||. The second-moment bound does not bind
// for linear costs while omega <= gamma.
double worst_case_linear_expectation(const Vector& a, double b, const MomentUncertaintySet& set);

// Componentwise extreme means over the E[delta] ellipsoid, floored at zero:
// lo_i = max(0, center_i - sqrt(omega Sigma_ii)), hi_i = center_i + sqrt(...).
std::pair<Vector, Vector> worst_case_component_bounds(const MomentUncertaintySet& set);

// Standalone epigraph program for the worst-case expectation of a'z + b:
// minimize v + t over the (Q, q, v, t) block of the tractable form. Its
// optimal value equals worst_case_linear_expectation within solver
// tolerance.
conic::ConicProgram build_worst_case_block(const Vector& a, double b, const MomentUncertaintySet& set);

struct WorstCaseBlockRefs {
  int v = -1;
  int t = -1;
  std::vector<int> q;
  std::vector<int> q_mat;  // svec coordinates of the PSD matrix variable
};

// In-program version with an affine cost vector; adds v + t to the
// objective and returns the variable references.
WorstCaseBlockRefs add_worst_case_block(conic::ProgramBuilder& builder,
                                        const std::vector<conic::LinExpr>& cost_vector,
                                        const MomentUncertaintySet& set, const std::string& prefix);

// Epigraph of z >= t^-a on [t_floor, t_max]. Exact rotated-SOC encoding for
// a = 1; tangent cuts below the convex function otherwise (refined by
// solve_balancing until the worst violation is within tolerance).
void add_hyperbolic_constraint(conic::ProgramBuilder& builder, int z_var, int t_var, double power,
                               double t_floor, double t_max, const std::vector<double>& extra_cut_points,
                               const std::string& name);

struct BalancingOptions {
  ProgramMode mode = ProgramMode::counterpart;
  std::optional<RatioBounds> bounds;  // user override; otherwise computed
  bool tighten_bounds = true;
  double relax_penalty_scale = 1e3;  // L1 weight (times theta) on ratio slack
  conic::SolveSettings solve;
  double cut_tolerance = 1e-6;
  int max_cut_rounds = 50;
  int interval0 = 0;  // interval-of-day of the first horizon step
};

struct BalancingVariableMap {
  std::vector<Eigen::MatrixXi> vacant_move;   // per step, N x N, -1 = fixed zero
  std::vector<Eigen::MatrixXi> lowbatt_move;  // per step, N x N, -1 = fixed zero
  Eigen::MatrixXi supply;       // tau x N: S
  Eigen::MatrixXi vacant;       // tau x N: V (first row -1: given)
  Eigen::MatrixXi occupied;     // tau x N: O
  Eigen::MatrixXi lowbatt;      // tau x N: L
  Eigen::MatrixXi net_inflow;   // tau x N: T (-1 off station regions)
  Eigen::MatrixXi epigraph;     // tau x N: z (-1 off station regions)
  Eigen::MatrixXi slack_hi;     // relaxation slack, -1 unless relaxed
  Eigen::MatrixXi slack_lo;
  int charge_norm = -1;         // counterpart-mode norm epigraph variable
  WorstCaseBlockRefs block;     // theorem1-mode block variables
};

struct BalancingProgramSpec {
  ProgramMode mode = ProgramMode::counterpart;
  conic::ConicProgram program;
  BalancingVariableMap map;
  Vector demand_lo, demand_hi, supply_lo;  // worst-case substitutions used
  RatioBounds bounds;
  bool relaxed = false;
};

struct BalancingSolution {
  BalancingDecision decision;
  SlackPair slacks;
  double objective = 0.0;
  Vector demand_lo, demand_hi, supply_lo;
  RatioBounds bounds;
  conic::SolveStatus status = conic::SolveStatus::max_iter;
  conic::KktReport kkt;
  double relaxation_amount = 0.0;
  double solve_ms = 0.0;
  int iterations = 0;
  int cut_rounds = 0;
};

// Default bounds: ratio range of the worst-case demand envelope against the
// zero-balancing supply rollout, optionally tightened through a relaxed
// solve that verifies feasibility is preserved.
RatioBounds default_ratio_bounds(const CityModel& city, const TransitionKernel& kernel,
                                 const FleetState& state, const Vector& demand_lo, const Vector& demand_hi,
                                 const Vector& supply_lo, int interval0);

BalancingProgramSpec build_balancing_program(const CityModel& city, const TransitionKernel& kernel,
                                             const FleetState& state, const Vector& demand_forecast,
                                             const Vector& supply_forecast,
                                             const MomentUncertaintySet& demand_set,
                                             const MomentUncertaintySet& supply_set,
                                             const BalancingOptions& options);

BalancingSolution solve_balancing(const CityModel& city, const TransitionKernel& kernel,
                                  const FleetState& state, const Vector& demand_forecast,
                                  const Vector& supply_forecast, const MomentUncertaintySet& demand_set,
                                  const MomentUncertaintySet& supply_set, const BalancingOptions& options);

// D = sqrt(r_lo - l S), U = sqrt(h S - r_hi); radicands clamped at zero
// down to -tol, errors beyond. Callers holding iterative-solver output pass
// a tolerance matched to the achieved residual.
SlackPair recover_slacks(const std::vector<Vector>& post_supply, const Vector& demand_lo,
                         const Vector& demand_hi, const RatioBounds& bounds, double tol = 1e-8);

}  // namespace evbal
