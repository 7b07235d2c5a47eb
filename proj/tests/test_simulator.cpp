#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "evbal/io.hpp"
#include "evbal/simulator.hpp"
#include "evbal/uncertainty.hpp"
#include "test_support.hpp"

using namespace evbal;

namespace {

io::GeneratorSpec small_spec(std::uint64_t seed) {
  io::GeneratorSpec spec;
  spec.n_regions = 3;
  spec.intervals_per_day = 6;
  spec.horizon = 2;
  spec.n_stations = 1;
  spec.fleet_size = 60;
  spec.history_days = 10;
  spec.demand_scale = 5.0;
  spec.episode_len = 6;
  spec.seed = seed;
  return spec;
}

Policy make_test_policy(const io::GeneratedWorld& world, Policy::Kind kind) {
  Policy p;
  p.kind = kind;
  p.name = kind == Policy::Kind::non_robust ? "non_robust" : "dro";
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::persistence;
  SeriesHistory demand_hist{world.history_demand, DemandSupplyVector::Role::demand, 60};
  SeriesHistory supply_hist{world.history_supply, DemandSupplyVector::Role::supply, 60};
  p.demand_predictor = fit(spec, demand_hist);
  p.supply_predictor = fit(spec, supply_hist);
  p.demand_history = world.history_demand;
  p.supply_history = world.history_supply;
  if (kind != Policy::Kind::non_robust) {
    BootstrapConfig cfg;
    cfg.outer_count = 3;
    cfg.inner_count = 8;
    cfg.studentize_count = 4;
    cfg.seed = 11;
    p.demand_report = run_estimation(demand_hist, spec, world.scenario.city.horizon, cfg);
    cfg.seed = 12;
    p.supply_report = run_estimation(supply_hist, spec, world.scenario.city.horizon, cfg);
  }
  return p;
}

bool records_equal(const IntervalRecord& a, const IntervalRecord& b) {
  return a.episode == b.episode && a.interval == b.interval &&
         (a.realized_demand - b.realized_demand).cwiseAbs().maxCoeff() == 0.0 &&
         (a.realized_supply - b.realized_supply).cwiseAbs().maxCoeff() == 0.0 &&
         (a.vacant_moves - b.vacant_moves).cwiseAbs().maxCoeff() == 0.0 &&
         (a.lowbatt_moves - b.lowbatt_moves).cwiseAbs().maxCoeff() == 0.0 &&
         a.m_balancing == b.m_balancing && a.m_mobility == b.m_mobility && a.m_charging == b.m_charging &&
         a.flags == b.flags;
}

}  // namespace

TEST_CASE("round_dispatch: integer, capped, largest remainder") {
  Matrix flows = Matrix::Zero(2, 4).topRows(2);
  flows = Matrix::Zero(4, 4);
  flows(0, 1) = 0.4;
  flows(0, 2) = 0.4;
  flows(0, 3) = 1.2;
  Vector avail(4);
  avail << 2, 0, 0, 0;
  Eigen::MatrixXi out = round_dispatch(flows, avail);
  CHECK(out(0, 1) == 1);  // largest remainder after the floor of 1.2
  CHECK(out(0, 2) == 0);
  CHECK(out(0, 3) == 1);
  CHECK(out.row(0).sum() == 2);

  // Row sums never exceed availability.
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix f(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) f(i, j) = i == j ? 0.0 : 3.0 * rng.uniform();
    Vector a(3);
    for (int i = 0; i < 3; ++i) a(i) = std::floor(4.0 * rng.uniform());
    Eigen::MatrixXi r = round_dispatch(f, a);
    for (int i = 0; i < 3; ++i) {
      CHECK(r.row(i).sum() <= static_cast<int>(a(i)));
      for (int j = 0; j < 3; ++j) CHECK(r(i, j) >= 0);
    }
  }
}

TEST_CASE("port queue drains at the port count with unit durations") {
  // One station with two ports, five queued vehicles, no demand, no churn.
  CityModel city = test::make_city(2, 1);
  city.horizon = 2;
  TransitionKernel kernel;
  KernelSlice slice;
  slice.p_vacant = Matrix::Identity(2, 2);
  slice.p_occupied = Matrix::Zero(2, 2);
  slice.p_lowbatt = Matrix::Zero(2, 2);  // no new low-battery vehicles
  slice.q_vacant = Matrix::Identity(2, 2);
  slice.q_occupied = Matrix::Zero(2, 2);
  kernel.slices = {slice};

  ScenarioConfig scenario;
  scenario.city = city;
  scenario.city.intervals_per_day = 1;
  scenario.kernel = kernel;
  scenario.demand.kind = DemandLaw::Kind::poisson;
  scenario.demand.mean = Matrix::Zero(1, 2);
  scenario.charging.ports = {2, 0};
  scenario.charging.extra_duration_rate = 0.0;  // duration exactly one interval
  scenario.charging.max_duration = 1;
  scenario.initial = FleetState::zero(2);
  scenario.initial.lowbatt(0) = 5;
  scenario.episode_len = 6;
  scenario.seed = 5;

  io::GeneratedWorld fake;
  fake.history_demand = Matrix::Zero(8, 2);
  fake.history_supply = Matrix::Zero(8, 2);
  fake.scenario = scenario;
  Policy policy = make_test_policy(fake, Policy::Kind::non_robust);

  SimulationLog log = run_receding_horizon(policy, scenario, 1);
  REQUIRE(log.records.size() == 6);
  CHECK(log.records[0].realized_supply(0) == doctest::Approx(0.0));
  CHECK(log.records[1].realized_supply(0) == doctest::Approx(2.0));
  CHECK(log.records[2].realized_supply(0) == doctest::Approx(2.0));
  CHECK(log.records[3].realized_supply(0) == doctest::Approx(1.0));
  CHECK(log.records[4].realized_supply(0) == doctest::Approx(0.0));
}

TEST_CASE("zero demand and zero low-battery give zero decisions and zero cost") {
  CityModel city = test::make_city(2, 1);
  city.horizon = 1;  // no future interval, so no charging-flow obligation ahead
  TransitionKernel kernel;
  KernelSlice slice;
  slice.p_vacant = Matrix::Identity(2, 2);
  slice.p_occupied = Matrix::Zero(2, 2);
  slice.p_lowbatt = Matrix::Zero(2, 2);
  slice.q_vacant = Matrix::Identity(2, 2);
  slice.q_occupied = Matrix::Zero(2, 2);
  kernel.slices = {slice};

  ScenarioConfig scenario;
  scenario.city = city;
  scenario.city.intervals_per_day = 1;
  scenario.kernel = kernel;
  scenario.demand.kind = DemandLaw::Kind::poisson;
  scenario.demand.mean = Matrix::Zero(1, 2);
  scenario.charging.ports = {1, 0};
  scenario.initial = FleetState::zero(2);
  scenario.initial.vacant << 5, 5;
  scenario.episode_len = 4;
  scenario.seed = 7;

  io::GeneratedWorld fake;
  fake.history_demand = Matrix::Zero(8, 2);
  fake.history_supply = Matrix::Zero(8, 2);
  fake.scenario = scenario;
  Policy policy = make_test_policy(fake, Policy::Kind::non_robust);

  SimulationLog log = run_receding_horizon(policy, scenario, 1);
  for (const auto& rec : log.records) {
    CHECK(rec.m_balancing == doctest::Approx(0.0));
    CHECK(rec.vacant_moves.cwiseAbs().maxCoeff() == 0.0);
    CHECK(rec.lowbatt_moves.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("fleet count is conserved every interval") {
  io::GeneratedWorld world = io::generate_world(small_spec(21));
  Policy policy = make_test_policy(world, Policy::Kind::non_robust);
  SimulationLog log = run_receding_horizon(policy, world.scenario, 2);
  REQUIRE(!log.records.empty());
  for (const auto& rec : log.records) {
    double total = rec.state_after.total();
    CHECK(total == doctest::Approx(log.fleet_total).epsilon(1e-12));
  }
}

TEST_CASE("identical seeds give identical logs") {
  io::GeneratedWorld world = io::generate_world(small_spec(33));
  Policy policy = make_test_policy(world, Policy::Kind::dro_counterpart);
  SimulationLog a = run_receding_horizon(policy, world.scenario, 2);
  SimulationLog b = run_receding_horizon(policy, world.scenario, 2);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(records_equal(a.records[i], b.records[i]));
}

TEST_CASE("singleton-set DRO reproduces the non-robust trajectory") {
  io::GeneratedWorld world = io::generate_world(small_spec(47));
  Policy robust = make_test_policy(world, Policy::Kind::dro_counterpart);
  // Degenerate reports: zero residual spread collapses the sets to points.
  Matrix zero_table = Matrix::Zero(40, world.scenario.city.n_regions * world.scenario.city.horizon);
  BootstrapConfig cfg;
  cfg.outer_count = 2;
  cfg.inner_count = 4;
  cfg.studentize_count = 3;
  cfg.seed = 3;
  auto zero_source = [&](const std::vector<int>& picked) {
    return Matrix::Zero(static_cast<Eigen::Index>(picked.size()), zero_table.cols());
  };
  EstimationReport degenerate =
      run_estimation(static_cast<int>(zero_table.rows()), static_cast<int>(zero_table.cols()), zero_source, cfg);
  robust.demand_report = degenerate;
  robust.supply_report = degenerate;

  Policy baseline = make_test_policy(world, Policy::Kind::non_robust);
  SimulationLog a = run_receding_horizon(robust, world.scenario, 1);
  SimulationLog b = run_receding_horizon(baseline, world.scenario, 1);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) CHECK(records_equal(a.records[i], b.records[i]));
}

TEST_CASE("metric sign conventions hold on a generated world") {
  io::GeneratedWorld world = io::generate_world(small_spec(55));
  Policy policy = make_test_policy(world, Policy::Kind::dro_counterpart);
  SimulationLog log = run_receding_horizon(policy, world.scenario, 1);
  for (const auto& rec : log.records) {
    CHECK(rec.m_balancing >= 0.0);
    CHECK(rec.m_mobility <= 1e-12);
    CHECK(rec.m_charging <= 1e-12);
  }
}

TEST_CASE("compare_policies: a policy against itself reports zero differences") {
  io::GeneratedWorld world = io::generate_world(small_spec(61));
  Policy policy = make_test_policy(world, Policy::Kind::non_robust);
  Policy clone = policy;
  clone.name = "clone";
  ComparisonReport rep = compare_policies({policy, clone}, world.scenario, 2);
  REQUIRE(rep.policies.size() == 2);
  CHECK(rep.policies[0].mean_daily_cost == doctest::Approx(rep.policies[1].mean_daily_cost));
  CHECK(rep.cost_reduction_pct[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(rep.mobility_gain_pct[0] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("balancing more frequently trades cost for fairness") {
  io::GeneratedWorld world = io::generate_world(small_spec(71));
  world.scenario.episode_len = 8;
  Policy frequent = make_test_policy(world, Policy::Kind::non_robust);
  Policy sparse = frequent;
  sparse.decision_period = 2;
  double cost_f = 0, cost_s = 0, mob_f = 0, mob_s = 0;
  const int episodes = 3;
  SimulationLog lf = run_receding_horizon(frequent, world.scenario, episodes);
  SimulationLog ls = run_receding_horizon(sparse, world.scenario, episodes);
  for (const auto& ep : lf.episodes) {
    cost_f += ep.daily_cost;
    mob_f += ep.mean_mobility;
  }
  for (const auto& ep : ls.episodes) {
    cost_s += ep.daily_cost;
    mob_s += ep.mean_mobility;
  }
  CHECK(cost_f >= cost_s - 1e-9);  // deciding every interval moves more
  CHECK(mob_f >= mob_s - 1e-9);    // and keeps the ratios closer to global
}
