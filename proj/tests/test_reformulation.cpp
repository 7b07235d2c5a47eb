#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "evbal/metrics.hpp"
#include "evbal/reformulation.hpp"
#include "test_support.hpp"

using namespace evbal;

namespace {

MomentUncertaintySet make_set(const Vector& center, const Matrix& cov, double omega, double gamma) {
  MomentUncertaintySet s;
  s.center = center;
  s.covariance = cov;
  s.omega = omega;
  s.gamma = gamma;
  return s;
}

struct Instance {
  CityModel city;
  TransitionKernel kernel;
  FleetState state;
  Vector demand_fc, supply_fc;
  MomentUncertaintySet demand_set, supply_set;
};

Instance make_instance(int n, int stations, Rng& rng, double omega_scale = 0.2) {
  Instance inst;
  inst.city = test::make_city(n, stations, 2.0, 0.8);
  inst.kernel = test::make_kernel(n, inst.city.intervals_per_day, rng);
  inst.state = test::make_state(n, rng, 25.0);
  const int d = n * inst.city.horizon;
  inst.demand_fc = Vector(d);
  inst.supply_fc = Vector(d);
  for (int i = 0; i < d; ++i) {
    inst.demand_fc(i) = 4.0 + 6.0 * rng.uniform();
    inst.supply_fc(i) = 0.3 + 2.5 * rng.uniform();
  }
  Matrix cov_r = test::random_spd(d, rng, 0.4, 2.0);
  Matrix cov_c = test::random_spd(d, rng, 0.2, 1.0);
  inst.demand_set = make_set(inst.demand_fc, cov_r, omega_scale * rng.uniform(), 1.0 + 0.4 * rng.uniform());
  inst.supply_set = make_set(inst.supply_fc, cov_c, omega_scale * rng.uniform(), 1.0 + 0.4 * rng.uniform());
  return inst;
}

}  // namespace

TEST_CASE("worst_case_linear_expectation closed forms") {
  Vector z0(2);
  z0 << 5, 7;
  MomentUncertaintySet set = make_set(z0, Matrix::Identity(2, 2), 4.0, 4.0);
  Vector zero = Vector::Zero(2);
  CHECK(worst_case_linear_expectation(zero, 3.5, set) == doctest::Approx(3.5));

  Vector e1(2);
  e1 << 1, 0;
  CHECK(worst_case_linear_expectation(e1, 0.0, set) == doctest::Approx(7.0));

  Matrix cov = Matrix::Zero(2, 2);
  cov(0, 0) = 1;
  cov(1, 1) = 4;
  MomentUncertaintySet set2 = make_set(Vector::Zero(2), cov, 1.0, 1.0);
  Vector ones = Vector::Ones(2);
  CHECK(worst_case_linear_expectation(ones, 0.0, set2) == doctest::Approx(std::sqrt(5.0)));
}

TEST_CASE("worst_case_component_bounds") {
  Vector z(1);
  z << 4;
  Matrix cov = Matrix::Constant(1, 1, 9.0);
  auto [lo, hi] = worst_case_component_bounds(make_set(z, cov, 1.0, 2.0));
  CHECK(hi(0) == doctest::Approx(7.0));
  CHECK(lo(0) == doctest::Approx(1.0));

  auto [lo0, hi0] = worst_case_component_bounds(make_set(z, cov, 0.0, 1.0));
  CHECK(lo0(0) == doctest::Approx(4.0));
  CHECK(hi0(0) == doctest::Approx(4.0));

  Vector z1(1);
  z1 << 1;
  auto [lof, hif] = worst_case_component_bounds(make_set(z1, cov, 1.0, 2.0));
  CHECK(lof(0) == doctest::Approx(0.0));
  CHECK(hif(0) == doctest::Approx(4.0));
}

TEST_CASE("worst-case block: zero cost has zero optimum") {
  MomentUncertaintySet set = make_set(Vector::Zero(2), Matrix::Identity(2, 2), 0.5, 1.5);
  conic::ConicProgram p = build_worst_case_block(Vector::Zero(2), 0.0, set);
  conic::ConicSolution sol = conic::solve(p);
  REQUIRE(sol.status == conic::SolveStatus::optimal);
  CHECK(std::abs(sol.objective) <= 1e-6);
}

TEST_CASE("worst-case block matches the closed form") {
  Vector z0(2);
  z0 << 5, 7;
  MomentUncertaintySet set = make_set(z0, Matrix::Identity(2, 2), 4.0, 4.0);
  Vector e1(2);
  e1 << 1, 0;
  conic::SolveSettings settings;
  settings.tol = 1e-7;
  conic::ConicSolution sol = conic::solve(build_worst_case_block(e1, 0.0, set), settings);
  REQUIRE(sol.status == conic::SolveStatus::optimal);
  CHECK(sol.objective == doctest::Approx(7.0).epsilon(2e-6));
}

TEST_CASE("worst-case block vs closed form on random instances") {
  Rng rng(31);
  conic::SolveSettings settings;
  settings.tol = 1e-7;
  for (int trial = 0; trial < 20; ++trial) {
    int d = 1 + static_cast<int>(rng.uniform_int(6));
    Matrix cov = test::random_spd(d, rng, 0.3, 2.5);
    Vector center = test::random_vector(d, rng, 2.0).cwiseAbs();
    double gamma = 1.0 + 2.0 * rng.uniform();
    double omega = gamma * rng.uniform();  // keep omega <= gamma
    MomentUncertaintySet set = make_set(center, cov, omega, gamma);
    Vector a = test::random_vector(d, rng, 1.5);
    double b = rng.normal();
    double closed = worst_case_linear_expectation(a, b, set);
    conic::ConicSolution sol = conic::solve(build_worst_case_block(a, b, set), settings);
    REQUIRE(sol.status == conic::SolveStatus::optimal);
    CHECK(sol.objective == doctest::Approx(closed).epsilon(1e-4));
  }
}

TEST_CASE("worst-case block vs grid enumeration oracle in one dimension") {
  // Two-point distributions on a grid over [-5, 5] with |E[delta]| <= 1 and
  // E[delta^2] <= 2.
  MomentUncertaintySet set = make_set(Vector::Zero(1), Matrix::Identity(1, 1), 1.0, 2.0);
  double oracle = -1e30;
  const int grid = 101;
  for (int i = 0; i < grid; ++i) {
    double z1 = -5.0 + 10.0 * i / (grid - 1);
    for (int j = i; j < grid; ++j) {
      double z2 = -5.0 + 10.0 * j / (grid - 1);
      for (int pi = 0; pi <= 20; ++pi) {
        double p = pi / 20.0;
        double mean = p * z1 + (1 - p) * z2;
        double second = p * z1 * z1 + (1 - p) * z2 * z2;
        if (std::abs(mean) <= 1.0 && second <= 2.0) oracle = std::max(oracle, mean);
      }
    }
  }
  CHECK(oracle == doctest::Approx(1.0).epsilon(1e-9));

  Vector a = Vector::Ones(1);
  conic::SolveSettings settings;
  settings.tol = 1e-7;
  conic::ConicSolution sol = conic::solve(build_worst_case_block(a, 0.0, set), settings);
  REQUIRE(sol.status == conic::SolveStatus::optimal);
  CHECK(sol.objective >= oracle - 1e-6);
  CHECK(sol.objective <= oracle + 1e-3);
}

TEST_CASE("hyperbolic constraint: exact rotated cone for power one") {
  for (double t_fixed : {2.0, 1.0}) {
    conic::ProgramBuilder b;
    int z = b.add_variable("z", 0.0);
    int t = b.add_variable("t", 0.0);
    b.add_objective(z, 1.0);
    b.add_equality(conic::LinExpr::variable(t) + conic::LinExpr(-t_fixed), "fix_t");
    add_hyperbolic_constraint(b, z, t, 1.0, 1e-3, 10.0, {}, "epi");
    conic::ConicSolution sol = conic::solve(b.build());
    REQUIRE(sol.status == conic::SolveStatus::optimal);
    CHECK(sol.primal(z) == doctest::Approx(1.0 / t_fixed).epsilon(1e-5));
  }
}

TEST_CASE("hyperbolic constraint: cut refinement converges for power two") {
  std::vector<double> cuts;
  double z_star = 0;
  for (int round = 0; round < 30; ++round) {
    conic::ProgramBuilder b;
    int z = b.add_variable("z", 0.0);
    int t = b.add_variable("t", 0.0);
    b.add_objective(z, 1.0);
    b.add_equality(conic::LinExpr::variable(t) + conic::LinExpr(-2.0), "fix_t");
    add_hyperbolic_constraint(b, z, t, 2.0, 1e-3, 10.0, cuts, "epi");
    conic::ConicSolution sol = conic::solve(b.build());
    REQUIRE(sol.status == conic::SolveStatus::optimal);
    z_star = sol.primal(z);
    double t_star = sol.primal(t);
    double target = std::pow(std::max(t_star, 1e-3), -2.0);
    if (target - z_star <= 1e-6) break;
    cuts.push_back(std::max(t_star, 1e-3));
  }
  CHECK(z_star == doctest::Approx(0.25).epsilon(1e-5));
}

TEST_CASE("counterpart with zero omega equals non_robust exactly") {
  Rng rng(43);
  Instance inst = make_instance(3, 1, rng);
  inst.demand_set.omega = 0.0;
  inst.supply_set.omega = 0.0;
  inst.demand_set.gamma = 1.0;
  inst.supply_set.gamma = 1.0;

  BalancingOptions opts;
  opts.tighten_bounds = false;
  opts.mode = ProgramMode::counterpart;
  BalancingSolution a = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                        inst.demand_set, inst.supply_set, opts);
  opts.mode = ProgramMode::non_robust;
  BalancingSolution b = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                        inst.demand_set, inst.supply_set, opts);
  REQUIRE(a.status == conic::SolveStatus::optimal);
  REQUIRE(b.status == conic::SolveStatus::optimal);
  CHECK(a.objective == doctest::Approx(b.objective).epsilon(1e-9));
}

TEST_CASE("counterpart and theorem1 modes agree") {
  Rng rng(47);
  for (int trial = 0; trial < 3; ++trial) {
    Instance inst = make_instance(3, 1, rng);
    BalancingOptions opts;
    opts.tighten_bounds = false;
    opts.solve.tol = 1e-7;
    opts.mode = ProgramMode::counterpart;
    BalancingSolution a = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                          inst.demand_set, inst.supply_set, opts);
    opts.mode = ProgramMode::theorem1_block;
    BalancingSolution b = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                          inst.demand_set, inst.supply_set, opts);
    REQUIRE(a.status == conic::SolveStatus::optimal);
    REQUIRE(b.status == conic::SolveStatus::optimal);
    CHECK(b.objective == doctest::Approx(a.objective).epsilon(1e-4));
  }
}

TEST_CASE("objective is monotone in the supply ambiguity radius") {
  Rng rng(53);
  Instance inst = make_instance(3, 1, rng);
  BalancingOptions opts;
  opts.tighten_bounds = false;
  double prev = -1e30;
  for (double omega : {0.0, 0.1, 0.3, 0.8}) {
    inst.supply_set.omega = omega;
    BalancingSolution sol = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc,
                                            inst.supply_fc, inst.demand_set, inst.supply_set, opts);
    REQUIRE(sol.status == conic::SolveStatus::optimal);
    CHECK(sol.objective >= prev - 1e-5);
    prev = sol.objective;
  }
}

TEST_CASE("worst-case dominance over sampled member distributions") {
  Rng rng(59);
  Instance inst = make_instance(3, 1, rng);
  BalancingOptions opts;
  opts.tighten_bounds = false;
  BalancingSolution sol = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                          inst.demand_set, inst.supply_set, opts);
  REQUIRE(sol.status == conic::SolveStatus::optimal);

  const int d = inst.supply_set.dim();
  const CityModel& city = inst.city;
  double dispatch_cost = 0;
  for (int k = 0; k < city.horizon; ++k)
    dispatch_cost += balancing_cost(sol.decision, city, k);

  Matrix root = [&] {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(inst.supply_set.covariance);
    return Matrix(eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                  eig.eigenvectors().transpose());
  }();
  int accepted = 0;
  for (int trial = 0; trial < 200 && accepted < 40; ++trial) {
    Vector u = test::random_vector(d, rng);
    Vector mu = std::sqrt(inst.supply_set.omega) * rng.uniform() * (root * u) / std::max(1e-12, u.norm());
    Vector mean_c = inst.supply_set.center + mu;
    if ((mean_c.array() < 0).any()) continue;
    if (mu.dot(inst.supply_set.covariance.llt().solve(mu)) > inst.supply_set.omega + 1e-12) continue;
    ++accepted;
    double expected = dispatch_cost;
    for (int k = 0; k < city.horizon; ++k)
      for (int i : city.charging_regions) {
        double t_val = std::max(sol.decision.net_charging_inflow[k](i), city.t_floor);
        expected += city.fairness_weight * mean_c(k * city.n_regions + i) /
                    std::pow(t_val, city.fairness_power);
      }
    CHECK(expected <= sol.objective + 1e-4 * std::max(1.0, std::abs(sol.objective)));
  }
  CHECK(accepted >= 10);
}

TEST_CASE("recover_slacks closes the ratio equalities") {
  std::vector<Vector> supply = {Vector::Constant(1, 2.0)};
  Vector r_lo = Vector::Constant(1, 4.0);
  Vector r_hi = Vector::Constant(1, 4.0);
  RatioBounds bounds;
  bounds.lower = Vector::Constant(1, 1.0);
  bounds.upper = Vector::Constant(1, 2.0);
  SlackPair slacks = recover_slacks(supply, r_lo, r_hi, bounds);
  CHECK(slacks.d[0](0) == doctest::Approx(std::sqrt(2.0)));
  CHECK(slacks.u[0](0) == doctest::Approx(0.0));  // upper row binds

  bounds.lower = Vector::Constant(1, 2.0);  // lower row binds
  SlackPair binding = recover_slacks(supply, r_lo, r_hi, bounds);
  CHECK(binding.d[0](0) == doctest::Approx(0.0));

  bounds.upper = Vector::Constant(1, 1.5);  // violated beyond tolerance
  CHECK_THROWS_AS(recover_slacks(supply, r_lo, r_hi, bounds), std::domain_error);
}

TEST_CASE("infeasible user bounds trigger the penalty relaxation") {
  Rng rng(61);
  Instance inst = make_instance(3, 1, rng);
  BalancingOptions opts;
  RatioBounds impossible;
  impossible.lower = Vector::Constant(inst.city.horizon, 5.0);
  impossible.upper = Vector::Constant(inst.city.horizon, 5.1);
  opts.bounds = impossible;
  BalancingSolution sol = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                          inst.demand_set, inst.supply_set, opts);
  REQUIRE(sol.status == conic::SolveStatus::optimal);
  CHECK(sol.relaxation_amount > 1e-3);
}

TEST_CASE("default bounds with tightening stay feasible") {
  Rng rng(67);
  for (int trial = 0; trial < 5; ++trial) {
    Instance inst = make_instance(3 + static_cast<int>(rng.uniform_int(2)), 1, rng);
    BalancingOptions opts;
    opts.tighten_bounds = true;
    BalancingSolution sol = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc,
                                            inst.supply_fc, inst.demand_set, inst.supply_set, opts);
    REQUIRE(sol.status == conic::SolveStatus::optimal);
    CHECK(sol.relaxation_amount == 0.0);
    CHECK(sol.kkt.primal_residual <= 1e-5);
    for (int k = 0; k < inst.city.horizon; ++k) {
      CHECK(sol.bounds.lower(k) <= sol.bounds.upper(k));
      for (int i : inst.city.charging_regions)
        CHECK(sol.decision.net_charging_inflow[k](i) >= inst.city.t_floor - 1e-6);
    }
  }
}

TEST_CASE("non_robust mode matches an independently built deterministic program") {
  Rng rng(71);
  Instance inst = make_instance(3, 1, rng);
  BalancingOptions opts;
  opts.tighten_bounds = false;
  opts.mode = ProgramMode::non_robust;
  BalancingSolution sol = solve_balancing(inst.city, inst.kernel, inst.state, inst.demand_fc, inst.supply_fc,
                                          inst.demand_set, inst.supply_set, opts);
  REQUIRE(sol.status == conic::SolveStatus::optimal);

  // Direct construction: flat loops, no shared builder helpers.
  const CityModel& city = inst.city;
  const int n = city.n_regions;
  const int tau = city.horizon;
  RatioBounds bounds = default_ratio_bounds(city, inst.kernel, inst.state, inst.demand_fc, inst.demand_fc,
                                            inst.supply_fc, 0);
  conic::ProgramBuilder b;
  std::vector<Matrix> xs, ys;
  std::vector<std::vector<int>> xv(tau), yv(tau), sv(tau), tv(tau), zv(tau), vv(tau), ov(tau), lv(tau);
  for (int k = 0; k < tau; ++k) {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        if (i != j && !city.vacant_arc_blocked(i, j))
          xv[k].push_back(b.add_variable("dx", 0.0, std::numeric_limits<double>::infinity(), city.vacant_cost(i, j)));
        else
          xv[k].push_back(-1);
        if (i != j && city.has_station(j) && !city.lowbatt_arc_blocked(i, j))
          yv[k].push_back(b.add_variable("dy", 0.0, std::numeric_limits<double>::infinity(), city.charge_weight * city.lowbatt_cost(i, j)));
        else
          yv[k].push_back(-1);
      }
    for (int i = 0; i < n; ++i) sv[k].push_back(b.add_variable("dS", 0.0));
    for (int i = 0; i < n; ++i) vv[k].push_back(k == 0 ? -1 : b.add_variable("dV", 0.0));
    for (int i = 0; i < n; ++i) ov[k].push_back(k == 0 ? -1 : b.add_variable("dO", 0.0));
    for (int i = 0; i < n; ++i) lv[k].push_back(k == 0 ? -1 : b.add_variable("dL", 0.0));
    for (int i = 0; i < n; ++i) {
      if (city.has_station(i)) {
        tv[k].push_back(b.add_variable("dT", city.t_floor));
        zv[k].push_back(b.add_variable("dz", 0.0, std::numeric_limits<double>::infinity(), city.fairness_weight * inst.supply_fc(k * n + i)));
      } else {
        tv[k].push_back(-1);
        zv[k].push_back(-1);
      }
    }
  }
  auto xnet = [&](int k, int i) {
    conic::LinExpr e;
    for (int j = 0; j < n; ++j) {
      if (xv[k][j * n + i] >= 0) e.add(xv[k][j * n + i], 1.0);
      if (xv[k][i * n + j] >= 0) e.add(xv[k][i * n + j], -1.0);
    }
    return e;
  };
  auto ynet = [&](int k, int i) {
    conic::LinExpr e;
    for (int j = 0; j < n; ++j) {
      if (yv[k][j * n + i] >= 0) e.add(yv[k][j * n + i], 1.0);
      if (yv[k][i * n + j] >= 0) e.add(yv[k][i * n + j], -1.0);
    }
    return e;
  };
  for (int k = 0; k < tau; ++k) {
    const KernelSlice& slice = inst.kernel.at(k);
    for (int i = 0; i < n; ++i) {
      conic::LinExpr s_def = conic::LinExpr::variable(sv[k][i]) - xnet(k, i);
      if (k == 0)
        s_def.constant -= inst.state.vacant(i);
      else
        s_def.add(vv[k][i], -1.0);
      b.add_equality(s_def, "dS");
    }
    if (k + 1 < tau) {
      for (int i = 0; i < n; ++i) {
        conic::LinExpr vn = conic::LinExpr::variable(vv[k + 1][i]);
        conic::LinExpr on = conic::LinExpr::variable(ov[k + 1][i]);
        conic::LinExpr ln = conic::LinExpr::variable(lv[k + 1][i]) - ynet(k, i);
        for (int j = 0; j < n; ++j) {
          vn.add(sv[k][j], -slice.p_vacant(j, i));
          on.add(sv[k][j], -slice.p_occupied(j, i));
          ln.add(sv[k][j], -slice.p_lowbatt(j, i));
          if (k == 0) {
            vn.constant -= slice.q_vacant(j, i) * inst.state.occupied(j);
            on.constant -= slice.q_occupied(j, i) * inst.state.occupied(j);
          } else {
            vn.add(ov[k][j], -slice.q_vacant(j, i));
            on.add(ov[k][j], -slice.q_occupied(j, i));
          }
        }
        vn.constant -= inst.supply_fc(k * n + i);
        b.add_equality(vn, "dV");
        b.add_equality(on, "dO");
        b.add_equality(ln, "dL");
      }
    }
    for (int i = 0; i < n; ++i) {
      if (tv[k][i] >= 0) {
        b.add_equality(conic::LinExpr::variable(tv[k][i]) - ynet(k, i), "dT");
        b.add_rsoc({conic::LinExpr::variable(zv[k][i]), conic::LinExpr::variable(tv[k][i]),
                    conic::LinExpr(std::sqrt(2.0))},
                   "depi");
      }
      conic::LinExpr hi = bounds.upper(k) * conic::LinExpr::variable(sv[k][i]);
      hi.constant -= inst.demand_fc(k * n + i);
      b.add_nonneg(hi, "dhi");
      conic::LinExpr lo = (-bounds.lower(k)) * conic::LinExpr::variable(sv[k][i]);
      lo.constant += inst.demand_fc(k * n + i);
      b.add_nonneg(lo, "dlo");
    }
  }
  conic::ConicSolution direct = conic::solve(b.build());
  REQUIRE(direct.status == conic::SolveStatus::optimal);
  CHECK(direct.objective == doctest::Approx(sol.objective).epsilon(1e-5));
}

TEST_CASE("program spec json dump stays consistent") {
  Rng rng(73);
  Instance inst = make_instance(3, 1, rng);
  BalancingOptions opts;
  opts.tighten_bounds = false;
  BalancingProgramSpec spec = build_balancing_program(inst.city, inst.kernel, inst.state, inst.demand_fc,
                                                      inst.supply_fc, inst.demand_set, inst.supply_set, opts);
  std::string dumped = conic::program_to_json(spec.program);
  conic::ConicProgram loaded = conic::program_from_json(dumped);
  CHECK(conic::program_to_json(loaded) == dumped);
  conic::ConicSolution a = conic::solve(spec.program);
  conic::ConicSolution c = conic::solve(loaded);
  REQUIRE(a.status == conic::SolveStatus::optimal);
  CHECK(a.objective == doctest::Approx(c.objective).epsilon(1e-9));
}
