#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evbal/forecast.hpp"
#include "evbal/types.hpp"

namespace evbal {

// Moment ambiguity set: distributions of z = center + delta with
// E[delta]' Sigma^-1 E[delta] <= omega and E[delta delta'] <= gamma * Sigma.
struct MomentUncertaintySet {
  Vector center;
  Matrix covariance;
  double omega = 0.0;
  double gamma = 1.0;

  int dim() const { return static_cast<int>(center.size()); }
  void validate() const;

  static MomentUncertaintySet singleton(const Vector& center);
};

struct BootstrapConfig {
  int outer_count = 8;        // A
  int inner_count = 32;       // B
  int studentize_count = 16;  // C
  int resample_size = 0;      // N_b; 0 means the full sample count
  double significance = 0.25; // alpha
  double confidence = 0.1;    // eta
  double ridge = 1e-8;        // relative ridge added to every sample covariance
  std::uint64_t seed = 1;
  bool lower_percentile = false;     // use the alpha quantile from below instead of 1 - alpha
  bool held_out_residuals = false;   // residuals on out-of-bag rows instead of the resample
  bool sum_inner_covariances = false;  // aggregate Sigma over the inner loop by sum, not mean

  void validate() const;
};

struct EstimationReport {
  Matrix sigma_hat;
  double omega_hat = 0.0;
  double gamma_hat = 1.0;
  std::array<double, 2> omega_region{0.0, 0.0};
  std::array<double, 2> gamma_region{0.0, 0.0};
  std::vector<double> omega_per_outer;         // omega_alpha^i
  std::vector<double> gamma_per_outer;         // gamma_alpha^i
  std::vector<double> omega_spread_per_outer;  // s_omega^i
  std::vector<double> gamma_spread_per_outer;  // s_gamma^i
  double omega_spread = 0.0;  // s_omega over the outer estimates
  double gamma_spread = 0.0;  // s_gamma
  double omega_q_lo = 0.0, omega_q_hi = 0.0;  // pivot quantiles at eta/2, 1 - eta/2
  double gamma_q_lo = 0.0, gamma_q_hi = 0.0;
  bool omega_region_degenerate = false;  // all studentizing spreads were zero
  bool gamma_region_degenerate = false;
  BootstrapConfig config;
};

// delta' Sigma^-1 delta via a Cholesky solve; Sigma must be positive
// definite.
double compute_omega(const Vector& mean_residual, const Matrix& sigma);

// Smallest gamma with sample_cov <= gamma * sigma: the largest generalized
// eigenvalue of the pair. Both inputs must be symmetric, sigma positive
// definite.
double compute_gamma(const Matrix& sample_cov, const Matrix& sigma);

// Order statistic at the 1-based index ceil(p * n); p = 0 maps to the
// smallest value.
double empirical_quantile(std::vector<double> values, double p);

// Produces residual rows for a resample given the picked sample indices.
// The callable owns the sample table and any model fitting.
using ResidualSource = std::function<Matrix(const std::vector<int>& picked)>;

// Nested bootstrap over a generic residual source with `sample_count`
// resampleable units of dimension `dim`.
EstimationReport run_estimation(int sample_count, int dim, const ResidualSource& source,
                                const BootstrapConfig& config);

// Algorithm wrapper that refits `spec` on every resample of the history's
// prediction windows and measures its residuals.
EstimationReport run_estimation(const SeriesHistory& history, const PredictorSpec& spec, int horizon,
                                const BootstrapConfig& config);

MomentUncertaintySet build_uncertainty_set(const EstimationReport& report, const Vector& center,
                                           bool conservative = false);

std::string report_to_json(const EstimationReport& report);
EstimationReport report_from_json(const std::string& text);

}  // namespace evbal
