#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <Eigen/Eigenvalues>

#include "evbal/uncertainty.hpp"
#include "test_support.hpp"

using namespace evbal;

TEST_CASE("compute_omega examples and scale law") {
  Matrix eye = Matrix::Identity(2, 2);
  Vector zero = Vector::Zero(2);
  CHECK(compute_omega(zero, eye) == doctest::Approx(0.0));

  Vector e1(2);
  e1 << 1, 0;
  CHECK(compute_omega(e1, eye) == doctest::Approx(1.0));

  Vector ones(2);
  ones << 1, 1;
  Matrix diag = Matrix::Zero(2, 2);
  diag(0, 0) = 1;
  diag(1, 1) = 4;
  CHECK(compute_omega(ones, diag) == doctest::Approx(1.25));

  Rng rng(3);
  Vector d = test::random_vector(3, rng);
  Matrix s = test::random_spd(3, rng);
  double c = 1.7;
  CHECK(compute_omega(c * d, s) == doctest::Approx(c * c * compute_omega(d, s)));
}

TEST_CASE("compute_gamma examples and scale law") {
  Matrix eye = Matrix::Identity(2, 2);
  CHECK(compute_gamma(eye, eye) == doctest::Approx(1.0));

  Matrix sbar = Matrix::Zero(2, 2);
  sbar(0, 0) = 2;
  sbar(1, 1) = 0.5;
  CHECK(compute_gamma(sbar, eye) == doctest::Approx(2.0));

  Matrix sigma = Matrix::Zero(2, 2);
  sigma(0, 0) = 4;
  sigma(1, 1) = 1;
  Matrix sbar2 = Matrix::Zero(2, 2);
  sbar2(0, 0) = 2;
  sbar2(1, 1) = 3;
  CHECK(compute_gamma(sbar2, sigma) == doctest::Approx(3.0));

  Rng rng(5);
  Matrix a = test::random_spd(3, rng);
  Matrix b = test::random_spd(3, rng);
  double c = 2.3;
  CHECK(compute_gamma(c * a, b) == doctest::Approx(c * compute_gamma(a, b)));

  Matrix asym = a;
  asym(0, 1) += 1.0;
  CHECK_THROWS_AS(compute_gamma(asym, b), std::invalid_argument);
}

TEST_CASE("compute_gamma returns the minimal feasible scaling") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    int d = 2 + static_cast<int>(rng.uniform_int(5));
    Matrix sigma = test::random_spd(d, rng);
    Matrix sbar = test::random_spd(d, rng);
    double gamma = compute_gamma(sbar, sigma);
    Eigen::SelfAdjointEigenSolver<Matrix> feas(gamma * sigma - sbar, Eigen::EigenvaluesOnly);
    CHECK(feas.eigenvalues().minCoeff() >= -1e-8 * gamma);
    Eigen::SelfAdjointEigenSolver<Matrix> infeas(gamma * (1.0 - 1e-6) * sigma - sbar, Eigen::EigenvaluesOnly);
    CHECK(infeas.eigenvalues().minCoeff() < 0.0);
  }
}

TEST_CASE("empirical_quantile order statistic rule") {
  CHECK(empirical_quantile({1, 2, 3, 4}, 0.5) == doctest::Approx(2.0));
  CHECK(empirical_quantile({1, 2, 3, 4}, 1.0) == doctest::Approx(4.0));
  CHECK(empirical_quantile({4, 3, 2, 1}, 0.0) == doctest::Approx(1.0));
  CHECK(empirical_quantile({5}, 0.3) == doctest::Approx(5.0));
  CHECK_THROWS_AS(empirical_quantile({}, 0.5), std::invalid_argument);
}

namespace {

// Residual source drawing rows from a fixed sample table.
ResidualSource table_source(const Matrix& table) {
  return [table](const std::vector<int>& picked) {
    Matrix rows(static_cast<Eigen::Index>(picked.size()), table.cols());
    for (std::size_t i = 0; i < picked.size(); ++i) rows.row(static_cast<Eigen::Index>(i)) = table.row(picked[i]);
    return rows;
  };
}

}  // namespace

TEST_CASE("run_estimation degenerates gracefully on zero residuals") {
  Matrix table = Matrix::Zero(50, 2);
  BootstrapConfig cfg;
  cfg.outer_count = 3;
  cfg.inner_count = 8;
  cfg.studentize_count = 4;
  cfg.seed = 9;
  EstimationReport rep = run_estimation(50, 2, table_source(table), cfg);
  CHECK(rep.omega_hat <= 1e-6);
  CHECK(rep.gamma_hat <= 1.0 + 1e-6);
  CHECK(rep.omega_region_degenerate);
}

TEST_CASE("run_estimation matches the chi-square oracle on gaussian residuals") {
  // Mean of a 100-draw resample of N(0, I_2) residuals: omega is roughly a
  // chi-square(2) over 100, so the 75th percentile sits near 2.77 / 100.
  Rng rng(13);
  Matrix table(400, 2);
  for (int i = 0; i < 400; ++i)
    for (int c = 0; c < 2; ++c) table(i, c) = rng.normal();
  BootstrapConfig cfg;
  cfg.outer_count = 4;
  cfg.inner_count = 200;
  cfg.studentize_count = 8;
  cfg.resample_size = 100;
  cfg.significance = 0.25;
  cfg.seed = 40;
  EstimationReport rep = run_estimation(400, 2, table_source(table), cfg);
  CHECK(rep.omega_hat == doctest::Approx(2.7726 / 100.0).epsilon(0.30));
  CHECK(rep.gamma_hat >= 1.0);
  CHECK(rep.gamma_hat <= 2.0);
}

TEST_CASE("run_estimation is deterministic per seed") {
  Rng rng(17);
  Matrix table(60, 2);
  for (int i = 0; i < 60; ++i)
    for (int c = 0; c < 2; ++c) table(i, c) = rng.normal();
  BootstrapConfig cfg;
  cfg.outer_count = 4;
  cfg.inner_count = 10;
  cfg.studentize_count = 6;
  cfg.seed = 77;
  EstimationReport a = run_estimation(60, 2, table_source(table), cfg);
  EstimationReport b = run_estimation(60, 2, table_source(table), cfg);
  CHECK(report_to_json(a) == report_to_json(b));
}

TEST_CASE("larger outer count stabilizes the estimate") {
  Rng rng(19);
  Matrix table(200, 2);
  for (int i = 0; i < 200; ++i)
    for (int c = 0; c < 2; ++c) table(i, c) = rng.normal();
  auto spread_at = [&](int outer) {
    std::vector<double> estimates;
    for (int rep = 0; rep < 12; ++rep) {
      BootstrapConfig cfg;
      cfg.outer_count = outer;
      cfg.inner_count = 24;
      cfg.studentize_count = 6;
      cfg.resample_size = 80;
      cfg.seed = 1000 + static_cast<std::uint64_t>(rep);
      estimates.push_back(run_estimation(200, 2, table_source(table), cfg).omega_hat);
    }
    double mean = 0;
    for (double e : estimates) mean += e;
    mean /= estimates.size();
    double acc = 0;
    for (double e : estimates) acc += (e - mean) * (e - mean);
    return std::sqrt(acc / (estimates.size() - 1));
  };
  CHECK(spread_at(8) < spread_at(1));
}

TEST_CASE("build_uncertainty_set modes") {
  Rng rng(23);
  Matrix table(80, 2);
  for (int i = 0; i < 80; ++i)
    for (int c = 0; c < 2; ++c) table(i, c) = rng.normal();
  BootstrapConfig cfg;
  cfg.outer_count = 6;
  cfg.inner_count = 16;
  cfg.studentize_count = 8;
  cfg.seed = 5;
  EstimationReport rep = run_estimation(80, 2, table_source(table), cfg);

  Vector center(2);
  center << 3, 4;
  MomentUncertaintySet set = build_uncertainty_set(rep, center);
  CHECK_NOTHROW(set.validate());
  CHECK(set.omega == doctest::Approx(rep.omega_hat));
  CHECK(set.gamma == doctest::Approx(rep.gamma_hat));

  MomentUncertaintySet wide = build_uncertainty_set(rep, center, true);
  if (rep.omega_q_lo <= 0) CHECK(wide.omega >= set.omega);

  // The pair (E[delta]=0, E[dd']=Sigma) always belongs to the set.
  CHECK(set.omega >= 0.0);
  CHECK(compute_gamma(set.covariance, set.covariance) <= set.gamma + 1e-9);
}

TEST_CASE("report json round trip") {
  Rng rng(29);
  Matrix table(40, 2);
  for (int i = 0; i < 40; ++i)
    for (int c = 0; c < 2; ++c) table(i, c) = rng.normal();
  BootstrapConfig cfg;
  cfg.outer_count = 3;
  cfg.inner_count = 8;
  cfg.studentize_count = 4;
  cfg.seed = 31;
  EstimationReport rep = run_estimation(40, 2, table_source(table), cfg);
  EstimationReport back = report_from_json(report_to_json(rep));
  CHECK(report_to_json(back) == report_to_json(rep));
}

TEST_CASE("estimation through the forecast wrapper") {
  // Persistence on a noisy constant: residuals are first differences.
  Rng rng(37);
  Matrix obs(140, 2);
  for (int t = 0; t < 140; ++t)
    for (int c = 0; c < 2; ++c) obs(t, c) = std::max(0.0, 10.0 + rng.normal());
  SeriesHistory hist{obs, DemandSupplyVector::Role::demand, 60};
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::persistence;
  BootstrapConfig cfg;
  cfg.outer_count = 4;
  cfg.inner_count = 12;
  cfg.studentize_count = 6;
  cfg.seed = 41;
  EstimationReport rep = run_estimation(hist, spec, 2, cfg);
  CHECK(rep.omega_hat >= 0.0);
  CHECK(rep.gamma_hat > 0.5);
  CHECK(rep.sigma_hat.rows() == 4);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(rep.sigma_hat, Eigen::EigenvaluesOnly);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}
