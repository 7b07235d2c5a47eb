#include "evbal/forecast.hpp"

#include <Eigen/Cholesky>
#include <stdexcept>

namespace evbal {

std::string PredictorSpec::describe() const {
  switch (kind) {
    case Kind::persistence: return "persistence";
    case Kind::seasonal_naive: return "seasonal_naive(" + std::to_string(period) + ")";
    case Kind::moving_average: return "moving_average(" + std::to_string(window) + ")";
    case Kind::ar: return "ar(" + std::to_string(order) + ")";
  }
  return "unknown";
}

int FittedPredictor::min_context() const {
  switch (spec_.kind) {
    case PredictorSpec::Kind::persistence: return 1;
    case PredictorSpec::Kind::seasonal_naive: return spec_.period;
    case PredictorSpec::Kind::moving_average: return spec_.window;
    case PredictorSpec::Kind::ar: return spec_.order;
  }
  return 1;
}

namespace {

Vector solve_normal_equations(const Matrix& gram, const Vector& rhs) {
  Eigen::LDLT<Matrix> ldlt(gram);
  if (ldlt.info() == Eigen::Success) {
    Vector beta = ldlt.solve(rhs);
    if ((gram * beta - rhs).norm() <= 1e-8 * (1.0 + rhs.norm())) return beta;
  }
  // Singular normal equations: ridge fallback.
  Matrix ridged = gram + 1e-6 * Matrix::Identity(gram.rows(), gram.cols());
  return Eigen::LDLT<Matrix>(ridged).solve(rhs);
}

}  // namespace

FittedPredictor fit(const PredictorSpec& spec, const SeriesHistory& history) {
  const Eigen::Index rows = history.observations.rows();
  const Eigen::Index n = history.observations.cols();
  if (n == 0) throw std::invalid_argument("fit: empty history");
  if (spec.order < 1 || spec.window < 1 || spec.period < 1)
    throw std::invalid_argument("fit: predictor parameters must be positive");

  FittedPredictor out;
  out.spec_ = spec;
  out.n_regions_ = static_cast<int>(n);

  if (spec.kind == PredictorSpec::Kind::ar) {
    const int p = spec.order;
    if (rows < p + 2) throw std::invalid_argument("fit: insufficient history for ar(" + std::to_string(p) + ")");
    out.ar_coeff_ = Matrix(p + 1, n);
    const Eigen::Index m = rows - p;
    Matrix design(m, p + 1);
    for (Eigen::Index c = 0; c < n; ++c) {
      Vector target(m);
      for (Eigen::Index t = 0; t < m; ++t) {
        design(t, 0) = 1.0;
        for (int q = 0; q < p; ++q) design(t, 1 + q) = history.observations(p + t - 1 - q, c);
        target(t) = history.observations(p + t, c);
      }
      out.ar_coeff_.col(c) = solve_normal_equations(design.transpose() * design, design.transpose() * target);
    }
  } else if (rows < out.min_context()) {
    throw std::invalid_argument("fit: insufficient history for " + spec.describe());
  }
  return out;
}

FittedPredictor fit_windows(const PredictorSpec& spec, const SeriesHistory& history,
                            const std::vector<int>& window_starts, int window_len) {
  const Eigen::Index rows = history.observations.rows();
  const Eigen::Index n = history.observations.cols();
  if (n == 0 || window_starts.empty()) throw std::invalid_argument("fit_windows: empty input");

  FittedPredictor out;
  out.spec_ = spec;
  out.n_regions_ = static_cast<int>(n);
  if (spec.kind != PredictorSpec::Kind::ar) return out;  // nothing to estimate

  const int p = spec.order;
  if (window_len < p + 1) throw std::invalid_argument("fit_windows: windows too short for ar(" + std::to_string(p) + ")");
  for (int w : window_starts)
    if (w < 0 || w + window_len > rows) throw std::invalid_argument("fit_windows: window out of range");

  const int pairs_per_window = window_len - p;
  Matrix design(static_cast<Eigen::Index>(window_starts.size()) * pairs_per_window, p + 1);
  Vector target(design.rows());
  out.ar_coeff_ = Matrix(p + 1, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    Eigen::Index r = 0;
    for (int w : window_starts) {
      for (int t = p; t < window_len; ++t, ++r) {
        design(r, 0) = 1.0;
        for (int q = 0; q < p; ++q) design(r, 1 + q) = history.observations(w + t - 1 - q, c);
        target(r) = history.observations(w + t, c);
      }
    }
    out.ar_coeff_.col(c) = solve_normal_equations(design.transpose() * design, design.transpose() * target);
  }
  return out;
}

Matrix FittedPredictor::predict_rows(const Matrix& context, int horizon) const {
  if (horizon < 1) throw std::invalid_argument("predict: horizon must be positive");
  if (context.cols() != n_regions_) throw std::invalid_argument("predict: wrong number of regions in context");
  if (context.rows() < min_context()) throw std::invalid_argument("predict: not enough context rows");

  const Eigen::Index ctx = context.rows();
  Matrix out(horizon, n_regions_);
  switch (spec_.kind) {
    case PredictorSpec::Kind::persistence:
      for (int s = 0; s < horizon; ++s) out.row(s) = context.row(ctx - 1);
      break;
    case PredictorSpec::Kind::moving_average: {
      Eigen::RowVectorXd mean = context.bottomRows(spec_.window).colwise().mean();
      for (int s = 0; s < horizon; ++s) out.row(s) = mean;
      break;
    }
    case PredictorSpec::Kind::seasonal_naive:
      for (int s = 0; s < horizon; ++s) {
        // Value one season before the predicted interval; within the
        // context for s < period, otherwise reuse the forecast itself.
        Eigen::Index back = ctx - spec_.period + s;
        if (back < ctx)
          out.row(s) = context.row(back);
        else
          out.row(s) = out.row(back - ctx);
      }
      break;
    case PredictorSpec::Kind::ar: {
      const int p = spec_.order;
      Matrix lags = context.bottomRows(p);  // most recent last
      for (int s = 0; s < horizon; ++s) {
        for (int c = 0; c < n_regions_; ++c) {
          double v = ar_coeff_(0, c);
          for (int q = 0; q < p; ++q) v += ar_coeff_(1 + q, c) * lags(p - 1 - q, c);
          out(s, c) = v;
        }
        if (p > 1) lags.topRows(p - 1) = lags.bottomRows(p - 1).eval();
        lags.row(p - 1) = out.row(s);
      }
      break;
    }
  }
  return out.cwiseMax(0.0);
}

Forecast predict(const FittedPredictor& predictor, const Matrix& context, int horizon,
                 DemandSupplyVector::Role role) {
  Matrix rows = predictor.predict_rows(context, horizon);
  Forecast f;
  f.role = role;
  f.model = predictor.spec().describe();
  f.point = Vector(rows.size());
  for (int s = 0; s < horizon; ++s) f.point.segment(s * predictor.n_regions(), predictor.n_regions()) = rows.row(s);
  return f;
}

Matrix residuals(const FittedPredictor& predictor, const SeriesHistory& history, int horizon) {
  const Eigen::Index rows = history.observations.rows();
  const int n = predictor.n_regions();
  const int ctx = predictor.min_context();
  const Eigen::Index count = rows - ctx - horizon + 1;
  if (count < 1) throw std::invalid_argument("residuals: history too short for one prediction window");

  Matrix out(count, n * horizon);
  for (Eigen::Index t = 0; t < count; ++t) {
    Matrix predicted = predictor.predict_rows(history.observations.middleRows(t, ctx), horizon);
    for (int s = 0; s < horizon; ++s)
      out.row(t).segment(s * n, n) = history.observations.row(ctx + t + s) - predicted.row(s);
  }
  return out;
}

}  // namespace evbal
