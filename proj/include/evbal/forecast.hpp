#pragma once

#include <string>

#include "evbal/types.hpp"

namespace evbal {

// Observed demand or supply counts, one row per interval, one column per
// region.
struct SeriesHistory {
  Matrix observations;
  DemandSupplyVector::Role role = DemandSupplyVector::Role::demand;
  int interval_minutes = 60;
};

struct PredictorSpec {
  enum class Kind { persistence, seasonal_naive, moving_average, ar };
  Kind kind = Kind::persistence;
  int order = 1;   // p, for ar
  int window = 1;  // w, for moving_average
  int period = 24; // season length in intervals, for seasonal_naive

  std::string describe() const;
};

struct Forecast {
  Vector point;  // length N * tau, region-major per interval, nonnegative
  std::string model;
  DemandSupplyVector::Role role = DemandSupplyVector::Role::demand;
};

// A fitted point predictor. Fitting is deterministic; ar(p) is fitted per
// region by least squares on lagged values with an intercept, falling back
// to ridge (lambda = 1e-6) when the normal equations are singular.
class FittedPredictor {
 public:
  FittedPredictor() = default;

  const PredictorSpec& spec() const { return spec_; }
  int n_regions() const { return n_regions_; }

  // ar only: (order + 1) x N, intercept first.
  const Matrix& ar_coefficients() const { return ar_coeff_; }

  // Rows of trailing context required to predict.
  int min_context() const;

  // Point forecast over `horizon` rows given trailing observations
  // (context rows end right before the first predicted interval). Negative
  // raw outputs are clamped to zero.
  Matrix predict_rows(const Matrix& context, int horizon) const;

  friend FittedPredictor fit(const PredictorSpec& spec, const SeriesHistory& history);
  friend FittedPredictor fit_windows(const PredictorSpec& spec, const SeriesHistory& history,
                                     const std::vector<int>& window_starts, int window_len);

 private:
  PredictorSpec spec_;
  int n_regions_ = 0;
  Matrix ar_coeff_;  // (order + 1) x N: intercept then lag coefficients
};

FittedPredictor fit(const PredictorSpec& spec, const SeriesHistory& history);

// Fit restricted to a multiset of windows of `window_len` consecutive rows;
// lag/target pairs never cross a window boundary. Used by the bootstrap,
// which resamples prediction windows with replacement.
FittedPredictor fit_windows(const PredictorSpec& spec, const SeriesHistory& history,
                            const std::vector<int>& window_starts, int window_len);

// Flattened horizon forecast from trailing context rows.
Forecast predict(const FittedPredictor& predictor, const Matrix& context, int horizon,
                 DemandSupplyVector::Role role = DemandSupplyVector::Role::demand);

// In-sample residual windows: one row per prediction origin t, holding the
// flattened difference (observed - predicted) over the next `horizon`
// intervals. Satisfies z = z_hat + delta row by row.
Matrix residuals(const FittedPredictor& predictor, const SeriesHistory& history, int horizon);

}  // namespace evbal
