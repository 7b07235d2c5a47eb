#include "evbal/reformulation.hpp"

#include <Eigen/Eigenvalues>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "evbal/dynamics.hpp"

namespace evbal {

using conic::LinExpr;
using conic::ProgramBuilder;

std::string to_string(ProgramMode mode) {
  switch (mode) {
    case ProgramMode::counterpart: return "counterpart";
    case ProgramMode::theorem1_block: return "theorem1";
    case ProgramMode::non_robust: return "non-robust";
  }
  return "?";
}

ProgramMode program_mode_from_string(const std::string& name) {
  if (name == "counterpart") return ProgramMode::counterpart;
  if (name == "theorem1" || name == "theorem1_block") return ProgramMode::theorem1_block;
  if (name == "non-robust" || name == "non_robust") return ProgramMode::non_robust;
  throw std::invalid_argument("unknown program mode: " + name);
}

namespace {

Matrix matrix_sqrt(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
         eig.eigenvectors().transpose();
}

}  // namespace

double worst_case_linear_expectation(const Vector& a, double b, const MomentUncertaintySet& set) {
  if (a.size() != set.center.size()) throw std::invalid_argument("worst_case_linear_expectation: dimension mismatch");
  if (set.omega == 0.0) return b + a.dot(set.center);
  double quad = a.dot(set.covariance * a);
  return b + a.dot(set.center) + std::sqrt(set.omega) * std::sqrt(std::max(0.0, quad));
}

std::pair<Vector, Vector> worst_case_component_bounds(const MomentUncertaintySet& set) {
  const Eigen::Index d = set.center.size();
  Vector lo(d), hi(d);
  for (Eigen::Index i = 0; i < d; ++i) {
    double spread = std::sqrt(std::max(0.0, set.omega * set.covariance(i, i)));
    hi(i) = set.center(i) + spread;
    lo(i) = std::max(0.0, set.center(i) - spread);
  }
  return {lo, hi};
}

WorstCaseBlockRefs add_worst_case_block(ProgramBuilder& builder, const std::vector<LinExpr>& cost_vector,
                                        const MomentUncertaintySet& set, const std::string& prefix) {
  const int d = set.dim();
  if (static_cast<int>(cost_vector.size()) != d)
    throw std::invalid_argument("worst_case_block: cost vector dimension mismatch");
  constexpr double kSqrt2 = 1.4142135623730950488016887242097;

  WorstCaseBlockRefs refs;
  refs.v = builder.add_variable(prefix + ".v", 0.0);
  refs.t = builder.add_variable(prefix + ".t");
  for (int i = 0; i < d; ++i) refs.q.push_back(builder.add_variable(prefix + ".q" + std::to_string(i)));
  const int svec_len = conic::svec_dim(d);
  for (int i = 0; i < svec_len; ++i)
    refs.q_mat.push_back(builder.add_variable(prefix + ".Q" + std::to_string(i)));
  builder.add_objective(refs.v, 1.0);
  builder.add_objective(refs.t, 1.0);

  // Entry (r, c) of the matrix variable Q in terms of its svec coordinates.
  auto q_entry = [&](int r, int c) {
    return LinExpr::variable(refs.q_mat[conic::svec_index(r, c, d)], r == c ? 1.0 : 1.0 / kSqrt2);
  };

  // Schur block [[v, 0.5(q - a)'], [0.5(q - a), Q]] >= 0.
  std::vector<LinExpr> outer;
  outer.reserve(conic::svec_dim(d + 1));
  for (int c = 0; c <= d; ++c) {
    for (int r = c; r <= d; ++r) {
      if (r == 0 && c == 0) {
        outer.push_back(LinExpr::variable(refs.v));
      } else if (c == 0) {
        outer.push_back(0.5 * (LinExpr::variable(refs.q[r - 1]) - cost_vector[r - 1]));
      } else {
        outer.push_back(q_entry(r - 1, c - 1));
      }
    }
  }
  builder.add_psd(d + 1, outer, prefix + ".schur");

  std::vector<LinExpr> q_block;
  q_block.reserve(svec_len);
  for (int c = 0; c < d; ++c)
    for (int r = c; r < d; ++r) q_block.push_back(q_entry(r, c));
  builder.add_psd(d, q_block, prefix + ".Q_psd");

  // t >= (gamma Sigma + z z') . Q + z'q + sqrt(omega) ||Sigma^{1/2}(q + 2 Q z)||.
  Matrix big = set.gamma * set.covariance + set.center * set.center.transpose();
  Vector big_svec = conic::svec(big);
  LinExpr linear = LinExpr::variable(refs.t);
  for (int i = 0; i < svec_len; ++i) linear.add(refs.q_mat[i], -big_svec(i));
  for (int i = 0; i < d; ++i) linear.add(refs.q[i], -set.center(i));

  if (set.omega > 0.0) {
    Matrix root = matrix_sqrt(set.covariance);
    // Per-component expression q_j + 2 (Q center)_j.
    std::vector<LinExpr> inner(d);
    for (int j = 0; j < d; ++j) {
      inner[j] = LinExpr::variable(refs.q[j]);
      for (int l = 0; l < d; ++l) {
        double coeff = 2.0 * set.center(l) * (j == l ? 1.0 : 1.0 / kSqrt2);
        inner[j].add(refs.q_mat[conic::svec_index(j, l, d)], coeff);
      }
    }
    std::vector<LinExpr> soc_rows;
    soc_rows.push_back(linear);
    const double scale = std::sqrt(set.omega);
    for (int r = 0; r < d; ++r) {
      LinExpr row;
      for (int j = 0; j < d; ++j)
        if (root(r, j) != 0.0) row += (scale * root(r, j)) * inner[j];
      soc_rows.push_back(row);
    }
    builder.add_soc(soc_rows, prefix + ".t_cone");
  } else {
    builder.add_nonneg(linear, prefix + ".t_cone");
  }
  return refs;
}

conic::ConicProgram build_worst_case_block(const Vector& a, double b, const MomentUncertaintySet& set) {
  ProgramBuilder builder;
  std::vector<LinExpr> cost;
  cost.reserve(a.size());
  for (Eigen::Index i = 0; i < a.size(); ++i) cost.push_back(LinExpr(a(i)));
  add_worst_case_block(builder, cost, set, "wc");
  builder.add_objective_offset(b);
  return builder.build();
}

void add_hyperbolic_constraint(ProgramBuilder& builder, int z_var, int t_var, double power, double t_floor,
                               double t_max, const std::vector<double>& extra_cut_points,
                               const std::string& name) {
  if (power <= 0) throw std::invalid_argument("hyperbolic_constraint: power must be positive");
  if (t_floor <= 0 || t_max < t_floor) throw std::invalid_argument("hyperbolic_constraint: bad interval");
  if (power == 1.0) {
    constexpr double kSqrt2 = 1.4142135623730950488016887242097;
    builder.add_rsoc({LinExpr::variable(z_var), LinExpr::variable(t_var), LinExpr(kSqrt2)}, name);
    return;
  }
  auto add_cut = [&](double t0, int idx) {
    // Tangent of t^-power at t0: z >= (1 + power) t0^-power - power t0^(-power-1) t.
    LinExpr e = LinExpr::variable(z_var);
    e.add(t_var, power * std::pow(t0, -power - 1.0));
    e.constant = -(1.0 + power) * std::pow(t0, -power);
    builder.add_nonneg(e, name + ".cut" + std::to_string(idx));
  };
  // Initial tangents start away from the floor: cuts there have slopes of
  // order t_floor^-(power+1) and wreck the conditioning. The refinement
  // loop still places cuts at the incumbent when the optimum sits low.
  const double t_lo = std::max(t_floor, t_max * 1e-2);
  const int grid = 8;
  int idx = 0;
  for (int g = 0; g < grid; ++g) {
    double t0 = t_lo * std::pow(std::max(1.0, t_max / t_lo), g / static_cast<double>(grid - 1));
    add_cut(t0, idx++);
  }
  for (double t0 : extra_cut_points) add_cut(std::clamp(t0, t_floor, t_max), idx++);
}

namespace {

std::vector<Vector> per_step(const Vector& flat, int horizon, int n) {
  std::vector<Vector> out;
  out.reserve(horizon);
  for (int k = 0; k < horizon; ++k) out.push_back(flat.segment(k * n, n));
  return out;
}

std::pair<double, double> ratio_range_or(const Vector& num, const Vector& den, double fallback_lo,
                                         double fallback_hi) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < num.size(); ++i) {
    if (den(i) <= 1e-12) continue;
    double r = num(i) / den(i);
    lo = std::min(lo, r);
    hi = std::max(hi, r);
  }
  if (!(lo <= hi)) return {fallback_lo, fallback_hi};
  return {std::max(0.0, lo), hi};
}

MomentUncertaintySet effective_set(const MomentUncertaintySet& set, const Vector& center, bool robust) {
  MomentUncertaintySet out = set;
  out.center = center;
  if (!robust) {
    out.omega = 0.0;
    out.gamma = 1.0;
  }
  return out;
}

struct BuildExtras {
  bool relaxed = false;
  std::vector<double> cut_points;  // shared tangent points for power != 1
};

BalancingProgramSpec build_program_impl(const CityModel& city, const TransitionKernel& kernel,
                                        const FleetState& state, const MomentUncertaintySet& demand_set,
                                        const MomentUncertaintySet& supply_set, const RatioBounds& bounds,
                                        ProgramMode mode, const BuildExtras& extras, int interval0) {
  city.validate();
  state.validate();
  const int n = city.n_regions;
  const int tau = city.horizon;
  const int d = n * tau;
  if (demand_set.dim() != d || supply_set.dim() != d)
    throw std::invalid_argument("balancing program: set dimension must be n_regions * horizon");
  if (state.vacant.size() != n) throw std::invalid_argument("balancing program: state dimension mismatch");
  if (bounds.lower.size() != tau || bounds.upper.size() != tau)
    throw std::invalid_argument("balancing program: one ratio bound pair per horizon step required");

  const bool robust = mode != ProgramMode::non_robust;
  auto [demand_lo, demand_hi] = worst_case_component_bounds(demand_set);
  Vector supply_lo = worst_case_component_bounds(supply_set).first;
  if (!robust) {
    demand_lo = demand_set.center;
    demand_hi = demand_set.center;
    supply_lo = supply_set.center;
  }

  if (tau >= 2) {
    bool any_lowbatt_inflow = false;
    for (int k = 0; k + 1 < tau; ++k)
      if (kernel.at(interval0 + k).p_lowbatt.sum() > 0) any_lowbatt_inflow = true;
    if (!any_lowbatt_inflow)
      throw std::domain_error("balancing program: t_floor unreachable, no vacant EV ever turns low-battery");
  }

  ProgramBuilder builder;
  BalancingVariableMap map;
  auto index_grid = [&](int rows, int cols) { return Eigen::MatrixXi::Constant(rows, cols, -1); };
  map.supply = index_grid(tau, n);
  map.vacant = index_grid(tau, n);
  map.occupied = index_grid(tau, n);
  map.lowbatt = index_grid(tau, n);
  map.net_inflow = index_grid(tau, n);
  map.epigraph = index_grid(tau, n);
  map.slack_hi = index_grid(tau, n);
  map.slack_lo = index_grid(tau, n);

  auto tag = [](const char* base, int k, int i, int j = -1) {
    std::string s = std::string(base) + "[" + std::to_string(k) + "][" + std::to_string(i) + "]";
    if (j >= 0) s += "[" + std::to_string(j) + "]";
    return s;
  };

  for (int k = 0; k < tau; ++k) {
    map.vacant_move.push_back(index_grid(n, n));
    map.lowbatt_move.push_back(index_grid(n, n));
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;  // self loops carry no cost and no net flow
        if (!city.vacant_arc_blocked(i, j))
          map.vacant_move[k](i, j) =
              builder.add_variable(tag("x", k, i, j), 0.0, std::numeric_limits<double>::infinity(),
                                   city.vacant_cost(i, j));
        if (city.has_station(j) && !city.lowbatt_arc_blocked(i, j))
          map.lowbatt_move[k](i, j) =
              builder.add_variable(tag("y", k, i, j), 0.0, std::numeric_limits<double>::infinity(),
                                   city.charge_weight * city.lowbatt_cost(i, j));
      }
    }
    for (int i = 0; i < n; ++i) map.supply(k, i) = builder.add_variable(tag("S", k, i), 0.0);
    if (k >= 1) {
      for (int i = 0; i < n; ++i) map.vacant(k, i) = builder.add_variable(tag("V", k, i), 0.0);
      for (int i = 0; i < n; ++i) map.occupied(k, i) = builder.add_variable(tag("O", k, i), 0.0);
      for (int i = 0; i < n; ++i) map.lowbatt(k, i) = builder.add_variable(tag("L", k, i), 0.0);
    }
    for (int i : city.charging_regions) {
      map.net_inflow(k, i) = builder.add_variable(tag("T", k, i), city.t_floor);
      map.epigraph(k, i) = builder.add_variable(tag("z", k, i), 0.0);
    }
    if (extras.relaxed) {
      double penalty = 1e3 * city.fairness_weight;
      for (int i = 0; i < n; ++i) {
        map.slack_hi(k, i) = builder.add_variable(tag("relax_hi", k, i), 0.0,
                                                  std::numeric_limits<double>::infinity(), penalty);
        map.slack_lo(k, i) = builder.add_variable(tag("relax_lo", k, i), 0.0,
                                                  std::numeric_limits<double>::infinity(), penalty);
      }
    }
  }

  auto x_net_inflow = [&](int k, int i) {
    LinExpr e;
    for (int j = 0; j < n; ++j) {
      if (map.vacant_move[k](j, i) >= 0) e.add(map.vacant_move[k](j, i), 1.0);
      if (map.vacant_move[k](i, j) >= 0) e.add(map.vacant_move[k](i, j), -1.0);
    }
    return e;
  };
  auto y_net_inflow = [&](int k, int i) {
    LinExpr e;
    for (int j = 0; j < n; ++j) {
      if (map.lowbatt_move[k](j, i) >= 0) e.add(map.lowbatt_move[k](j, i), 1.0);
      if (map.lowbatt_move[k](i, j) >= 0) e.add(map.lowbatt_move[k](i, j), -1.0);
    }
    return e;
  };
  auto supply_expr = [&](int k, int i) { return LinExpr::variable(map.supply(k, i)); };
  auto vacant_expr = [&](int k, int i) {
    return k == 0 ? LinExpr(state.vacant(i)) : LinExpr::variable(map.vacant(k, i));
  };
  auto occupied_expr = [&](int k, int i) {
    return k == 0 ? LinExpr(state.occupied(i)) : LinExpr::variable(map.occupied(k, i));
  };

  for (int k = 0; k < tau; ++k) {
    const KernelSlice& slice = kernel.at(interval0 + k);
    for (int i = 0; i < n; ++i)
      builder.add_equality(supply_expr(k, i) - vacant_expr(k, i) - x_net_inflow(k, i), tag("def_S", k, i));
    if (k + 1 < tau) {
      for (int i = 0; i < n; ++i) {
        LinExpr v_next = LinExpr::variable(map.vacant(k + 1, i));
        LinExpr o_next = LinExpr::variable(map.occupied(k + 1, i));
        LinExpr l_next = LinExpr::variable(map.lowbatt(k + 1, i));
        for (int j = 0; j < n; ++j) {
          v_next += (-slice.p_vacant(j, i)) * supply_expr(k, j);
          v_next += (-slice.q_vacant(j, i)) * occupied_expr(k, j);
          o_next += (-slice.p_occupied(j, i)) * supply_expr(k, j);
          o_next += (-slice.q_occupied(j, i)) * occupied_expr(k, j);
          l_next += (-slice.p_lowbatt(j, i)) * supply_expr(k, j);
        }
        v_next.constant -= supply_lo(k * n + i);
        builder.add_equality(v_next, tag("def_V", k + 1, i));
        builder.add_equality(o_next, tag("def_O", k + 1, i));
        builder.add_equality(l_next - y_net_inflow(k, i), tag("def_L", k + 1, i));
      }
    }
    for (int i : city.charging_regions)
      builder.add_equality(LinExpr::variable(map.net_inflow(k, i)) - y_net_inflow(k, i), tag("def_T", k, i));

    for (int i = 0; i < n; ++i) {
      LinExpr hi_row = bounds.upper(k) * supply_expr(k, i);
      hi_row.constant -= demand_hi(k * n + i);
      if (extras.relaxed) hi_row.add(map.slack_hi(k, i), 1.0);
      builder.add_nonneg(hi_row, tag("ratio_hi", k, i));
      LinExpr lo_row = (-bounds.lower(k)) * supply_expr(k, i);
      lo_row.constant += demand_lo(k * n + i);
      if (extras.relaxed) lo_row.add(map.slack_lo(k, i), 1.0);
      builder.add_nonneg(lo_row, tag("ratio_lo", k, i));
    }

    const double t_max = std::max(city.t_floor * 2.0, state.total());
    for (int i : city.charging_regions)
      add_hyperbolic_constraint(builder, map.epigraph(k, i), map.net_inflow(k, i), city.fairness_power,
                                city.t_floor, t_max, extras.cut_points, tag("epi", k, i));
  }

  // Worst-case charging cost term.
  MomentUncertaintySet supply_eff = supply_set;
  if (!robust) {
    supply_eff.omega = 0.0;
    supply_eff.gamma = 1.0;
  }
  if (mode == ProgramMode::theorem1_block && robust) {
    std::vector<LinExpr> cost(d);
    for (int k = 0; k < tau; ++k)
      for (int i : city.charging_regions)
        cost[k * n + i] = LinExpr::variable(map.epigraph(k, i), city.fairness_weight);
    map.block = add_worst_case_block(builder, cost, supply_eff, "charge_wc");
  } else {
    for (int k = 0; k < tau; ++k)
      for (int i : city.charging_regions)
        builder.add_objective(map.epigraph(k, i), city.fairness_weight * supply_eff.center(k * n + i));
    if (supply_eff.omega > 0.0) {
      map.charge_norm = builder.add_variable("charge_norm", 0.0, std::numeric_limits<double>::infinity(),
                                             city.fairness_weight * std::sqrt(supply_eff.omega));
      Matrix root = matrix_sqrt(supply_eff.covariance);
      std::vector<LinExpr> rows;
      rows.push_back(LinExpr::variable(map.charge_norm));
      for (int r = 0; r < d; ++r) {
        LinExpr row;
        for (int k = 0; k < tau; ++k)
          for (int i : city.charging_regions) {
            double coeff = root(r, k * n + i);
            if (coeff != 0.0) row.add(map.epigraph(k, i), coeff);
          }
        rows.push_back(row);
      }
      builder.add_soc(rows, "charge_norm_cone");
    }
  }

  BalancingProgramSpec spec;
  spec.mode = mode;
  spec.map = std::move(map);
  spec.demand_lo = demand_lo;
  spec.demand_hi = demand_hi;
  spec.supply_lo = supply_lo;
  spec.bounds = bounds;
  spec.relaxed = extras.relaxed;
  spec.program = builder.build();
  return spec;
}

}  // namespace

RatioBounds default_ratio_bounds(const CityModel& city, const TransitionKernel& kernel,
                                 const FleetState& state, const Vector& demand_lo, const Vector& demand_hi,
                                 const Vector& supply_lo, int interval0) {
  const int n = city.n_regions;
  const int tau = city.horizon;
  auto rollout = unbalanced_supply_rollout(state, kernel, per_step(supply_lo, tau, n), tau, interval0);
  RatioBounds out;
  out.lower = Vector(tau);
  out.upper = Vector(tau);
  for (int k = 0; k < tau; ++k) {
    auto [lo, lo_hi] = ratio_range_or(demand_lo.segment(k * n, n), rollout[k], 0.0, 0.0);
    auto [hi_lo, hi] = ratio_range_or(demand_hi.segment(k * n, n), rollout[k], lo, lo);
    (void)lo_hi;
    (void)hi_lo;
    if (!(hi >= lo)) throw std::domain_error("ratio bounds: no region admits a finite demand/supply ratio");
    out.lower(k) = lo;
    out.upper(k) = hi;
  }
  return out;
}

BalancingProgramSpec build_balancing_program(const CityModel& city, const TransitionKernel& kernel,
                                             const FleetState& state, const Vector& demand_forecast,
                                             const Vector& supply_forecast,
                                             const MomentUncertaintySet& demand_set,
                                             const MomentUncertaintySet& supply_set,
                                             const BalancingOptions& options) {
  const bool robust = options.mode != ProgramMode::non_robust;
  MomentUncertaintySet demand_eff = effective_set(demand_set, demand_forecast, robust);
  MomentUncertaintySet supply_eff = effective_set(supply_set, supply_forecast, robust);
  auto [demand_lo, demand_hi] = worst_case_component_bounds(demand_eff);
  Vector supply_lo = worst_case_component_bounds(supply_eff).first;
  RatioBounds bounds = options.bounds
                           ? *options.bounds
                           : default_ratio_bounds(city, kernel, state, demand_lo, demand_hi, supply_lo,
                                                  options.interval0);
  return build_program_impl(city, kernel, state, demand_eff, supply_eff, bounds, options.mode, {},
                            options.interval0);
}

namespace {

struct RawSolve {
  BalancingProgramSpec spec;
  conic::ConicSolution solution;
};

RawSolve solve_once(const CityModel& city, const TransitionKernel& kernel, const FleetState& state,
                    const MomentUncertaintySet& demand_eff, const MomentUncertaintySet& supply_eff,
                    const RatioBounds& bounds, ProgramMode mode, const BuildExtras& extras,
                    const BalancingOptions& options) {
  RawSolve out;
  out.spec = build_program_impl(city, kernel, state, demand_eff, supply_eff, bounds, mode, extras,
                                options.interval0);
  out.solution = conic::solve(out.spec.program, options.solve);
  return out;
}

std::vector<Vector> extract_supply(const BalancingProgramSpec& spec, const conic::ConicSolution& sol,
                                   int tau, int n) {
  std::vector<Vector> s;
  for (int k = 0; k < tau; ++k) {
    Vector row(n);
    for (int i = 0; i < n; ++i) row(i) = std::max(0.0, sol.primal(spec.map.supply(k, i)));
    s.push_back(row);
  }
  return s;
}

}  // namespace

BalancingSolution solve_balancing(const CityModel& city, const TransitionKernel& kernel,
                                  const FleetState& state, const Vector& demand_forecast,
                                  const Vector& supply_forecast, const MomentUncertaintySet& demand_set,
                                  const MomentUncertaintySet& supply_set, const BalancingOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = city.n_regions;
  const int tau = city.horizon;
  const bool robust = options.mode != ProgramMode::non_robust;

  MomentUncertaintySet demand_eff = effective_set(demand_set, demand_forecast, robust);
  MomentUncertaintySet supply_eff = effective_set(supply_set, supply_forecast, robust);
  auto [demand_lo, demand_hi] = worst_case_component_bounds(demand_eff);
  Vector supply_lo = worst_case_component_bounds(supply_eff).first;

  RatioBounds bounds;
  if (options.bounds) {
    bounds = *options.bounds;
  } else {
    bounds = default_ratio_bounds(city, kernel, state, demand_lo, demand_hi, supply_lo, options.interval0);
    if (options.tighten_bounds) {
      // Relaxed solve at the global bounds; counterpart mode keeps the
      // tightening identical across requested modes.
      RawSolve relaxed = solve_once(city, kernel, state, demand_eff, supply_eff, bounds,
                                    robust ? ProgramMode::counterpart : ProgramMode::non_robust, {}, options);
      if (relaxed.solution.status == conic::SolveStatus::optimal) {
        auto s_star = extract_supply(relaxed.spec, relaxed.solution, tau, n);
        RatioBounds tightened = bounds;
        bool ok = true;
        for (int k = 0; k < tau; ++k) {
          auto [lo, unused_hi] = ratio_range_or(demand_lo.segment(k * n, n), s_star[k], bounds.lower(k),
                                                bounds.upper(k));
          auto [unused_lo, hi] = ratio_range_or(demand_hi.segment(k * n, n), s_star[k], bounds.lower(k),
                                                bounds.upper(k));
          (void)unused_hi;
          (void)unused_lo;
          tightened.lower(k) = std::max(bounds.lower(k), lo);
          tightened.upper(k) = std::min(bounds.upper(k), hi);
          if (tightened.lower(k) > tightened.upper(k)) ok = false;
        }
        if (ok) {
          RawSolve verify = solve_once(city, kernel, state, demand_eff, supply_eff, tightened,
                                       robust ? ProgramMode::counterpart : ProgramMode::non_robust, {},
                                       options);
          if (verify.solution.status == conic::SolveStatus::optimal) bounds = tightened;
        }
      }
    }
  }

  BuildExtras extras;
  RawSolve raw = solve_once(city, kernel, state, demand_eff, supply_eff, bounds, options.mode, extras, options);

  double relaxation_amount = 0.0;
  if (raw.solution.status == conic::SolveStatus::primal_infeasible) {
    extras.relaxed = true;
    raw = solve_once(city, kernel, state, demand_eff, supply_eff, bounds, options.mode, extras, options);
    if (raw.solution.status == conic::SolveStatus::optimal) {
      for (int k = 0; k < tau; ++k)
        for (int i = 0; i < n; ++i)
          relaxation_amount += std::max(0.0, raw.solution.primal(raw.spec.map.slack_hi(k, i))) +
                               std::max(0.0, raw.solution.primal(raw.spec.map.slack_lo(k, i)));
    }
  }

  int cut_rounds = 0;
  if (city.fairness_power != 1.0 && raw.solution.status == conic::SolveStatus::optimal) {
    for (; cut_rounds < options.max_cut_rounds; ++cut_rounds) {
      double worst = 0.0;
      std::vector<double> new_cuts;
      for (int k = 0; k < tau; ++k)
        for (int i : city.charging_regions) {
          double t_val = raw.solution.primal(raw.spec.map.net_inflow(k, i));
          double z_val = raw.solution.primal(raw.spec.map.epigraph(k, i));
          double target = std::pow(std::max(t_val, city.t_floor), -city.fairness_power);
          if (target - z_val > options.cut_tolerance) {
            worst = std::max(worst, target - z_val);
            new_cuts.push_back(std::max(t_val, city.t_floor));
          }
        }
      if (worst <= options.cut_tolerance) break;
      extras.cut_points.insert(extras.cut_points.end(), new_cuts.begin(), new_cuts.end());
      raw = solve_once(city, kernel, state, demand_eff, supply_eff, bounds, options.mode, extras, options);
      if (raw.solution.status != conic::SolveStatus::optimal) break;
    }
  }

  BalancingSolution out;
  out.status = raw.solution.status;
  out.objective = raw.solution.objective;
  out.demand_lo = demand_lo;
  out.demand_hi = demand_hi;
  out.supply_lo = supply_lo;
  out.bounds = bounds;
  out.relaxation_amount = relaxation_amount;
  out.iterations = raw.solution.iterations;
  out.cut_rounds = cut_rounds;

  out.decision = BalancingDecision::zero(n, tau);
  if (raw.solution.primal.size() == raw.spec.program.num_vars &&
      raw.solution.status != conic::SolveStatus::primal_infeasible) {
    for (int k = 0; k < tau; ++k) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          if (raw.spec.map.vacant_move[k](i, j) >= 0)
            out.decision.vacant_moves[k](i, j) = std::max(0.0, raw.solution.primal(raw.spec.map.vacant_move[k](i, j)));
          if (raw.spec.map.lowbatt_move[k](i, j) >= 0)
            out.decision.lowbatt_moves[k](i, j) = std::max(0.0, raw.solution.primal(raw.spec.map.lowbatt_move[k](i, j)));
        }
      for (int i = 0; i < n; ++i)
        out.decision.post_supply[k](i) = std::max(0.0, raw.solution.primal(raw.spec.map.supply(k, i)));
      for (int i : city.charging_regions)
        out.decision.net_charging_inflow[k](i) = raw.solution.primal(raw.spec.map.net_inflow(k, i));
    }
    out.kkt = conic::verify_kkt(raw.spec.program, raw.solution);
    if (raw.solution.status == conic::SolveStatus::optimal && !raw.spec.relaxed) {
      // Ratio rows hold to the solver's achieved precision, not exactly.
      double row_scale = 1.0 + demand_hi.cwiseAbs().maxCoeff() + raw.spec.program.offset.cwiseAbs().maxCoeff();
      double slack_tol = std::max(1e-8, 10.0 * out.kkt.primal_residual * row_scale);
      out.slacks = recover_slacks(out.decision.post_supply, demand_lo, demand_hi, bounds, slack_tol);
    }
  }

  out.solve_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

SlackPair recover_slacks(const std::vector<Vector>& post_supply, const Vector& demand_lo,
                         const Vector& demand_hi, const RatioBounds& bounds, double tol) {
  const int tau = static_cast<int>(post_supply.size());
  if (tau == 0) throw std::invalid_argument("recover_slacks: empty supply");
  const int n = static_cast<int>(post_supply[0].size());
  SlackPair out;
  auto safe_sqrt = [tol](double radicand, const char* which) {
    if (radicand < -tol) throw std::domain_error(std::string("recover_slacks: ratio row violated (") + which + ")");
    return std::sqrt(std::max(0.0, radicand));
  };
  for (int k = 0; k < tau; ++k) {
    Vector dk(n), uk(n);
    for (int i = 0; i < n; ++i) {
      dk(i) = safe_sqrt(demand_lo(k * n + i) - bounds.lower(k) * post_supply[k](i), "lower");
      uk(i) = safe_sqrt(bounds.upper(k) * post_supply[k](i) - demand_hi(k * n + i), "upper");
    }
    out.d.push_back(dk);
    out.u.push_back(uk);
  }
  return out;
}

}  // namespace evbal
