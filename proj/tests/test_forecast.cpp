#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "evbal/forecast.hpp"
#include "evbal/metrics.hpp"
#include "evbal/rng.hpp"

using namespace evbal;

namespace {

SeriesHistory history_of(const Matrix& obs) {
  return SeriesHistory{obs, DemandSupplyVector::Role::demand, 60};
}

}  // namespace

TEST_CASE("persistence predicts the last observed value") {
  Matrix obs(5, 2);
  obs << 1, 2, 3, 4, 5, 6, 7, 8, 9, 10;
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::persistence;
  FittedPredictor p = fit(spec, history_of(obs));
  Forecast f = predict(p, obs, 2);
  CHECK(f.point(0) == doctest::Approx(9.0));
  CHECK(f.point(1) == doctest::Approx(10.0));
  CHECK(f.point(2) == doctest::Approx(9.0));
  CHECK(f.point(3) == doctest::Approx(10.0));
}

TEST_CASE("ar(1) recovers the exact recursion coefficient") {
  const int rows = 25;
  Matrix obs(rows, 1);
  obs(0, 0) = 1.0;
  for (int t = 1; t < rows; ++t) obs(t, 0) = 0.5 * obs(t - 1, 0);
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::ar;
  spec.order = 1;
  FittedPredictor p = fit(spec, history_of(obs));
  CHECK(p.ar_coefficients()(1, 0) == doctest::Approx(0.5).epsilon(1e-8));
  CHECK(std::abs(p.ar_coefficients()(0, 0)) < 1e-8);
}

TEST_CASE("seasonal_naive reproduces a periodic series with zero residuals") {
  const int period = 24;
  Matrix obs(3 * period, 2);
  for (int t = 0; t < obs.rows(); ++t) {
    obs(t, 0) = 5.0 + std::sin(2.0 * M_PI * (t % period) / period);
    obs(t, 1) = 2.0 + (t % period);
  }
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::seasonal_naive;
  spec.period = period;
  FittedPredictor p = fit(spec, history_of(obs));
  Matrix res = residuals(p, history_of(obs), 2);
  CHECK(res.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("residual identity reconstructs the history") {
  Rng rng(5);
  Matrix obs(40, 3);
  for (int t = 0; t < 40; ++t)
    for (int c = 0; c < 3; ++c) obs(t, c) = std::max(0.0, 5.0 + rng.normal());
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::moving_average;
  spec.window = 3;
  FittedPredictor p = fit(spec, history_of(obs));
  const int horizon = 2;
  Matrix res = residuals(p, history_of(obs), horizon);
  const int ctx = p.min_context();
  for (Eigen::Index t = 0; t < res.rows(); ++t) {
    Matrix pred = p.predict_rows(obs.middleRows(t, ctx), horizon);
    for (int s = 0; s < horizon; ++s)
      for (int c = 0; c < 3; ++c)
        CHECK(obs(t + ctx + s, c) == doctest::Approx(pred(s, c) + res(t, s * 3 + c)));
  }
}

TEST_CASE("persistence residual mean vanishes on iid noise") {
  Rng rng(11);
  const int rows = 4000;
  const double sd = 1.0;
  Matrix obs(rows, 1);
  for (int t = 0; t < rows; ++t) obs(t, 0) = 10.0 + sd * rng.normal();
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::persistence;
  FittedPredictor p = fit(spec, history_of(obs));
  Matrix res = residuals(p, history_of(obs), 1);
  double mean = res.col(0).mean();
  CHECK(std::abs(mean) <= 3.0 * sd * std::sqrt(2.0 / static_cast<double>(res.rows())));
}

TEST_CASE("zero-noise in-sample mse within model class") {
  // ar(1) data with an intercept, no noise.
  Matrix obs(30, 1);
  obs(0, 0) = 10.0;
  for (int t = 1; t < 30; ++t) obs(t, 0) = 2.0 + 0.6 * obs(t - 1, 0);
  PredictorSpec spec;
  spec.kind = PredictorSpec::Kind::ar;
  spec.order = 1;
  FittedPredictor p = fit(spec, history_of(obs));
  Matrix res = residuals(p, history_of(obs), 1);
  CHECK(res.squaredNorm() / res.size() <= 1e-12);
}

TEST_CASE("mse examples") {
  Vector a(2), b(2);
  a << 1, 2;
  b << 3, 2;
  CHECK(mse(a, a) == doctest::Approx(0.0));
  CHECK(mse(a, b) == doctest::Approx(2.0));
  Vector c(3);
  CHECK_THROWS_AS(mse(a, c), std::invalid_argument);
}

TEST_CASE("ar(1) beats persistence on ar(1)-generated data") {
  Rng rng(17);
  const int rows = 2000;
  Matrix obs(rows, 1);
  obs(0, 0) = 5.0;
  for (int t = 1; t < rows; ++t) obs(t, 0) = std::max(0.0, 2.0 + 0.6 * obs(t - 1, 0) + rng.normal());
  PredictorSpec ar1{PredictorSpec::Kind::ar, 1, 1, 24};
  PredictorSpec pers{PredictorSpec::Kind::persistence, 1, 1, 24};
  Matrix res_ar = residuals(fit(ar1, history_of(obs)), history_of(obs), 1);
  Matrix res_p = residuals(fit(pers, history_of(obs)), history_of(obs), 1);
  double mse_ar = res_ar.squaredNorm() / res_ar.size();
  double mse_p = res_p.bottomRows(res_ar.rows()).squaredNorm() / res_ar.size();
  CHECK(mse_ar < mse_p);
}

TEST_CASE("fit and predict are deterministic") {
  Rng rng(23);
  Matrix obs(60, 2);
  for (int t = 0; t < 60; ++t)
    for (int c = 0; c < 2; ++c) obs(t, c) = std::max(0.0, 4.0 + rng.normal());
  PredictorSpec spec{PredictorSpec::Kind::ar, 2, 1, 24};
  Forecast a = predict(fit(spec, history_of(obs)), obs, 3);
  Forecast b = predict(fit(spec, history_of(obs)), obs, 3);
  CHECK((a.point - b.point).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forecasts are clamped at zero") {
  Matrix obs(10, 1);
  for (int t = 0; t < 10; ++t) obs(t, 0) = 10.0 - 3.0 * t;  // strongly decreasing
  PredictorSpec spec{PredictorSpec::Kind::ar, 1, 1, 24};
  FittedPredictor p = fit(spec, history_of(obs.cwiseMax(0.0)));
  Forecast f = predict(p, obs.cwiseMax(0.0), 4);
  CHECK((f.point.array() >= 0).all());
}

TEST_CASE("fit rejects insufficient history") {
  Matrix obs(2, 1);
  obs << 1, 2;
  PredictorSpec spec{PredictorSpec::Kind::ar, 3, 1, 24};
  CHECK_THROWS_AS(fit(spec, history_of(obs)), std::invalid_argument);
  PredictorSpec seasonal{PredictorSpec::Kind::seasonal_naive, 1, 1, 24};
  CHECK_THROWS_AS(fit(seasonal, history_of(obs)), std::invalid_argument);
}
