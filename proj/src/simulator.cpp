#include "evbal/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "evbal/metrics.hpp"

namespace evbal {

void ScenarioConfig::validate() const {
  city.validate();
  kernel.validate();
  initial.validate();
  if (demand.mean.rows() != city.intervals_per_day || demand.mean.cols() != city.n_regions)
    throw std::invalid_argument("scenario: demand mean must be K x N");
  if (demand.kind == DemandLaw::Kind::trunc_normal &&
      (demand.sd.rows() != city.intervals_per_day || demand.sd.cols() != city.n_regions))
    throw std::invalid_argument("scenario: demand sd must be K x N");
  if ((demand.mean.array() < 0).any()) throw std::invalid_argument("scenario: negative demand mean");
  if (static_cast<int>(charging.ports.size()) != city.n_regions)
    throw std::invalid_argument("scenario: one port count per region required");
  for (int i = 0; i < city.n_regions; ++i) {
    if (city.has_station(i) && charging.ports[i] < 1)
      throw std::invalid_argument("scenario: station regions need at least one port");
  }
  if (episode_len < 1) throw std::invalid_argument("scenario: episode_len must be positive");
  if (initial.in_charging.size() > 0 && initial.in_charging.sum() != 0)
    throw std::invalid_argument("scenario: initial in_charging must be zero");
}

ProgramMode Policy::mode() const {
  switch (kind) {
    case Kind::dro_counterpart: return ProgramMode::counterpart;
    case Kind::dro_theorem1: return ProgramMode::theorem1_block;
    case Kind::non_robust: return ProgramMode::non_robust;
  }
  return ProgramMode::counterpart;
}

Vector sample_demand(Rng& rng, const ScenarioConfig& scenario, int interval_of_day) {
  const int n = scenario.city.n_regions;
  Vector r(n);
  for (int i = 0; i < n; ++i) {
    double mean = scenario.demand.mean(interval_of_day, i) * scenario.shift.mean_factor;
    if (scenario.demand.kind == DemandLaw::Kind::poisson) {
      r(i) = static_cast<double>(rng.poisson(mean));
    } else {
      double sd = scenario.demand.sd(interval_of_day, i) * scenario.shift.sd_factor *
                  scenario.shift.mean_factor;
      double draw = rng.normal(mean, sd);
      int attempts = 0;
      while (draw < 0 && ++attempts < 64) draw = rng.normal(mean, sd);  // re-draw, not clamp
      r(i) = std::round(std::max(0.0, draw));
    }
  }
  return r;
}

Eigen::MatrixXi round_dispatch(const Matrix& flows, const Vector& available) {
  const int n = static_cast<int>(flows.rows());
  Eigen::MatrixXi out = Eigen::MatrixXi::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    double row_sum = 0;
    for (int j = 0; j < n; ++j)
      if (j != i) row_sum += std::max(0.0, flows(i, j));
    if (row_sum <= 0) continue;
    double avail = std::max(0.0, available(i));
    double scale = std::min(1.0, avail / row_sum);
    long target = std::lround(std::min(avail, row_sum * scale));
    if (target <= 0) continue;

    std::vector<std::pair<double, int>> remainders;
    long placed = 0;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      double v = std::max(0.0, flows(i, j)) * scale;
      long f = static_cast<long>(std::floor(v + 1e-12));
      out(i, j) = static_cast<int>(f);
      placed += f;
      remainders.push_back({v - static_cast<double>(f), j});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t idx = 0; placed < target && idx < remainders.size(); ++idx, ++placed)
      out(i, remainders[idx].second) += 1;
    while (placed > target) {  // lround overshoot beyond available
      for (int j = 0; j < n && placed > target; ++j)
        if (out(i, j) > 0) {
          out(i, j) -= 1;
          --placed;
        }
    }
  }
  return out;
}

namespace {

// Port occupancy with per-interval finish times.
struct ChargingQueue {
  std::vector<std::map<int, int>> finish_at;  // region -> interval -> count
  Vector busy;

  explicit ChargingQueue(int n) : finish_at(n), busy(Vector::Zero(n)) {}

  int admit(int region, int now, int count, Rng& rng, const ChargingModel& model) {
    int free = model.ports[region] - static_cast<int>(busy(region));
    int admitted = std::min(count, std::max(0, free));
    for (int v = 0; v < admitted; ++v) {
      int extra = static_cast<int>(rng.poisson(model.extra_duration_rate));
      int duration = std::min(1 + extra, std::max(1, model.max_duration));
      finish_at[region][now + duration] += 1;
    }
    busy(region) += admitted;
    return admitted;
  }

  Vector finish(int now) {
    Vector done = Vector::Zero(busy.size());
    for (std::size_t i = 0; i < finish_at.size(); ++i) {
      auto it = finish_at[i].find(now);
      if (it != finish_at[i].end()) {
        done(static_cast<Eigen::Index>(i)) = it->second;
        busy(static_cast<Eigen::Index>(i)) -= it->second;
        finish_at[i].erase(it);
      }
    }
    return done;
  }
};

double guarded_ratio_gap(const Vector& num, const Vector& den, bool& guarded) {
  std::vector<double> ns, ds;
  for (Eigen::Index i = 0; i < num.size(); ++i) {
    if (den(i) > 0) {
      ns.push_back(num(i));
      ds.push_back(den(i));
    } else if (num(i) > 0) {
      guarded = true;
    }
  }
  if (ns.empty()) {
    guarded = true;
    return 0.0;
  }
  double num_total = std::accumulate(ns.begin(), ns.end(), 0.0);
  double den_total = std::accumulate(ds.begin(), ds.end(), 0.0);
  double global = num_total / den_total;
  double gap = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) gap += std::abs(ns[i] / ds[i] - global);
  return -gap;
}

Vector net_flow(const Eigen::MatrixXi& m) {
  Vector inflow = Vector::Zero(m.rows());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) {
      inflow(j) += m(i, j);
      inflow(i) -= m(i, j);
    }
  return inflow;
}

Matrix tail_rows(const Matrix& m, int count) {
  count = std::min<int>(count, static_cast<int>(m.rows()));
  return m.bottomRows(count);
}

}  // namespace

SimulationLog run_receding_horizon(const Policy& policy, const ScenarioConfig& scenario, int episodes) {
  scenario.validate();
  const CityModel& city = scenario.city;
  const int n = city.n_regions;
  const int tau = city.horizon;
  const int kday = city.intervals_per_day;

  MomentUncertaintySet demand_set, supply_set;
  if (policy.kind == Policy::Kind::non_robust) {
    demand_set = MomentUncertaintySet::singleton(Vector::Zero(n * tau));
    supply_set = MomentUncertaintySet::singleton(Vector::Zero(n * tau));
  } else {
    demand_set = build_uncertainty_set(policy.demand_report, Vector::Zero(n * tau), policy.conservative);
    supply_set = build_uncertainty_set(policy.supply_report, Vector::Zero(n * tau), policy.conservative);
  }

  BalancingOptions options = policy.options;
  options.mode = policy.mode();

  SimulationLog log;
  log.fleet_total = scenario.initial.total();

  const int context = std::max(policy.demand_predictor.min_context(), policy.supply_predictor.min_context());

  for (int ep = 0; ep < episodes; ++ep) {
    Rng demand_rng = Rng(scenario.seed).fork(0xDE, static_cast<std::uint64_t>(ep));
    Rng transition_rng = Rng(scenario.seed).fork(0x7A, static_cast<std::uint64_t>(ep));
    Rng charge_rng = Rng(scenario.seed).fork(0xC4, static_cast<std::uint64_t>(ep));

    FleetState state = scenario.initial;
    state.in_charging = Vector::Zero(n);
    ChargingQueue queue(n);
    Matrix demand_ctx = tail_rows(policy.demand_history, context + kday);
    Matrix supply_ctx = tail_rows(policy.supply_history, context + kday);

    EpisodeStats stats;
    stats.episode = ep;
    std::vector<double> mobility_vals, charging_vals;

    for (int t = 0; t < scenario.episode_len; ++t) {
      const int k0 = t % kday;
      IntervalRecord rec;
      rec.episode = ep;
      rec.interval = t;

      options.interval0 = k0;
      BalancingSolution sol;
      bool fallback = false;
      if (t % std::max(1, policy.decision_period) == 0) {
        Forecast demand_fc =
            predict(policy.demand_predictor, demand_ctx, tau, DemandSupplyVector::Role::demand);
        Forecast supply_fc =
            predict(policy.supply_predictor, supply_ctx, tau, DemandSupplyVector::Role::supply);
        try {
          sol = solve_balancing(city, scenario.kernel, state, demand_fc.point, supply_fc.point, demand_set,
                                supply_set, options);
          if (sol.status != conic::SolveStatus::optimal) fallback = true;
        } catch (const std::exception&) {
          fallback = true;
        }
      } else {
        sol.decision = BalancingDecision::zero(n, tau);  // idle between decision epochs
      }
      if (fallback) {
        sol.decision = BalancingDecision::zero(n, tau);
        rec.flags |= 1;
      }
      rec.solve_ms = sol.solve_ms;

      // Execute the first-interval decision on integer counts.
      Eigen::MatrixXi x_int = round_dispatch(sol.decision.vacant_moves[0], state.vacant);
      Eigen::MatrixXi y_int = round_dispatch(sol.decision.lowbatt_moves[0], state.lowbatt);
      rec.vacant_moves = x_int.cast<double>();
      rec.lowbatt_moves = y_int.cast<double>();

      Vector s_exec = state.vacant + net_flow(x_int);
      Vector l_moved = state.lowbatt + net_flow(y_int);
      Vector t_exec = net_flow(y_int);

      // Ports freed by this interval's finishers are immediately available
      // to the FIFO admission of arriving low-battery vehicles.
      Vector c_real = queue.finish(t);
      Vector l_rem = l_moved;
      for (int i : city.charging_regions) {
        int admitted = queue.admit(i, t, static_cast<int>(std::llround(l_moved(i))), charge_rng,
                                   scenario.charging);
        l_rem(i) -= admitted;
      }
      Vector r_real = sample_demand(demand_rng, scenario, k0);
      rec.realized_demand = r_real;
      rec.realized_supply = c_real;

      // Metrics on the executed decision.
      rec.m_balancing = balancing_cost(rec.vacant_moves, rec.lowbatt_moves, city);
      rec.m_balancing_planned =
          balancing_cost(sol.decision.vacant_moves[0], sol.decision.lowbatt_moves[0], city);
      bool guarded = false;
      rec.m_mobility = guarded_ratio_gap(r_real, s_exec, guarded);
      Vector c_sigma(static_cast<Eigen::Index>(city.charging_regions.size()));
      Vector t_sigma(static_cast<Eigen::Index>(city.charging_regions.size()));
      for (std::size_t si = 0; si < city.charging_regions.size(); ++si) {
        c_sigma(static_cast<Eigen::Index>(si)) = c_real(city.charging_regions[si]);
        t_sigma(static_cast<Eigen::Index>(si)) = t_exec(city.charging_regions[si]);
      }
      rec.m_charging = guarded_ratio_gap(c_sigma, t_sigma, guarded);
      if (guarded) rec.flags |= 2;

      // Ground-truth transition: multinomial apportionment conserves counts.
      const KernelSlice& slice = scenario.kernel.at(k0);
      Vector v_next = c_real;  // finishers become vacant supply
      Vector o_next = Vector::Zero(n);
      Vector l_new = Vector::Zero(n);
      for (int j = 0; j < n; ++j) {
        long s_count = std::llround(s_exec(j));
        if (s_count > 0) {
          std::vector<double> weights(3 * n);
          for (int i = 0; i < n; ++i) {
            weights[i] = slice.p_vacant(j, i);
            weights[n + i] = slice.p_occupied(j, i);
            weights[2 * n + i] = slice.p_lowbatt(j, i);
          }
          auto counts = transition_rng.multinomial(static_cast<std::uint64_t>(s_count), weights);
          for (int i = 0; i < n; ++i) {
            v_next(i) += static_cast<double>(counts[i]);
            o_next(i) += static_cast<double>(counts[n + i]);
            l_new(i) += static_cast<double>(counts[2 * n + i]);
          }
        }
        long o_count = std::llround(state.occupied(j));
        if (o_count > 0) {
          std::vector<double> weights(2 * n);
          for (int i = 0; i < n; ++i) {
            weights[i] = slice.q_vacant(j, i);
            weights[n + i] = slice.q_occupied(j, i);
          }
          auto counts = transition_rng.multinomial(static_cast<std::uint64_t>(o_count), weights);
          for (int i = 0; i < n; ++i) {
            v_next(i) += static_cast<double>(counts[i]);
            o_next(i) += static_cast<double>(counts[n + i]);
          }
        }
      }

      state.vacant = v_next;
      state.occupied = o_next;
      state.lowbatt = l_rem + l_new;
      state.in_charging = queue.busy;
      rec.state_after = state;

      double total_now = state.total();
      if (std::abs(total_now - log.fleet_total) > 1e-9)
        throw std::logic_error("simulator: fleet count not conserved");

      // The realized interval extends both rolling histories.
      auto append_row = [](Matrix& ctx, const Vector& row) {
        Matrix next(ctx.rows() + 1, ctx.cols());
        next.topRows(ctx.rows()) = ctx;
        next.row(ctx.rows()) = row.transpose();
        ctx = next;
      };
      append_row(demand_ctx, r_real);
      append_row(supply_ctx, c_real);

      stats.daily_cost += rec.m_balancing;
      stats.daily_cost_planned += rec.m_balancing_planned;
      stats.solve_ms_total += rec.solve_ms;
      if (rec.flags & 1) ++stats.fallback_count;
      mobility_vals.push_back(rec.m_mobility);
      charging_vals.push_back(rec.m_charging);
      log.records.push_back(std::move(rec));
    }

    stats.mean_mobility =
        std::accumulate(mobility_vals.begin(), mobility_vals.end(), 0.0) / mobility_vals.size();
    stats.mean_charging =
        std::accumulate(charging_vals.begin(), charging_vals.end(), 0.0) / charging_vals.size();
    log.episodes.push_back(stats);
  }
  return log;
}

namespace {

PolicySummary summarize(const std::string& name, const SimulationLog& log) {
  PolicySummary s;
  s.name = name;
  for (const auto& ep : log.episodes) {
    s.daily_costs.push_back(ep.daily_cost);
    s.mobility_means.push_back(ep.mean_mobility);
    s.charging_means.push_back(ep.mean_charging);
    s.fallback_count += ep.fallback_count;
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  s.mean_daily_cost = mean(s.daily_costs);
  s.mean_mobility = mean(s.mobility_means);
  s.mean_charging = mean(s.charging_means);
  double acc = 0;
  for (double c : s.daily_costs) acc += (c - s.mean_daily_cost) * (c - s.mean_daily_cost);
  s.var_daily_cost = s.daily_costs.size() > 1 ? acc / static_cast<double>(s.daily_costs.size() - 1) : 0.0;
  for (const auto& r : log.records) {
    s.mean_solve_ms += r.solve_ms;
    s.max_solve_ms = std::max(s.max_solve_ms, r.solve_ms);
  }
  if (!log.records.empty()) s.mean_solve_ms /= static_cast<double>(log.records.size());
  return s;
}

}  // namespace

ComparisonReport compare_policies(const std::vector<Policy>& policies, const ScenarioConfig& scenario,
                                  int episodes) {
  if (policies.size() < 2) throw std::invalid_argument("compare_policies: need at least two policies");
  ComparisonReport rep;
  for (const auto& p : policies) {
    SimulationLog log = run_receding_horizon(p, scenario, episodes);
    rep.policies.push_back(summarize(p.name, log));
  }
  const PolicySummary& base = rep.policies.back();
  auto pct = [](double better_direction) { return better_direction * 100.0; };
  for (const auto& p : rep.policies) {
    rep.cost_reduction_pct.push_back(
        base.mean_daily_cost != 0 ? pct((base.mean_daily_cost - p.mean_daily_cost) / std::abs(base.mean_daily_cost))
                                  : 0.0);
    rep.mobility_gain_pct.push_back(
        base.mean_mobility != 0 ? pct((p.mean_mobility - base.mean_mobility) / std::abs(base.mean_mobility))
                                : 0.0);
    rep.charging_gain_pct.push_back(
        base.mean_charging != 0 ? pct((p.mean_charging - base.mean_charging) / std::abs(base.mean_charging))
                                : 0.0);
  }
  return rep;
}

}  // namespace evbal
