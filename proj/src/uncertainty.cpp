#include "evbal/uncertainty.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "evbal/rng.hpp"
#include "json.hpp"

namespace evbal {

void MomentUncertaintySet::validate() const {
  const Eigen::Index d = center.size();
  if (covariance.rows() != d || covariance.cols() != d)
    throw std::invalid_argument("uncertainty set: covariance shape does not match center");
  double scale = std::max(1.0, covariance.cwiseAbs().maxCoeff());
  if ((covariance - covariance.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("uncertainty set: covariance must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0)
    throw std::invalid_argument("uncertainty set: covariance must be positive definite");
  if (omega < 0) throw std::invalid_argument("uncertainty set: omega must be nonnegative");
  if (gamma <= 0) throw std::invalid_argument("uncertainty set: gamma must be positive");
}

MomentUncertaintySet MomentUncertaintySet::singleton(const Vector& center) {
  MomentUncertaintySet s;
  s.center = center;
  s.covariance = Matrix::Identity(center.size(), center.size());
  s.omega = 0.0;
  s.gamma = 1.0;
  return s;
}

void BootstrapConfig::validate() const {
  if (outer_count < 1) throw std::invalid_argument("bootstrap: outer_count must be >= 1");
  if (inner_count < 2) throw std::invalid_argument("bootstrap: inner_count must be >= 2");
  if (studentize_count < 2) throw std::invalid_argument("bootstrap: studentize_count must be >= 2");
  if (resample_size < 0) throw std::invalid_argument("bootstrap: resample_size must be nonnegative");
  if (significance <= 0 || significance >= 1) throw std::invalid_argument("bootstrap: significance must be in (0,1)");
  if (confidence <= 0 || confidence >= 1) throw std::invalid_argument("bootstrap: confidence must be in (0,1)");
  if (ridge <= 0) throw std::invalid_argument("bootstrap: ridge must be positive");
}

double compute_omega(const Vector& mean_residual, const Matrix& sigma) {
  if (sigma.rows() != mean_residual.size() || sigma.cols() != mean_residual.size())
    throw std::invalid_argument("compute_omega: dimension mismatch");
  Eigen::LLT<Matrix> llt(sigma);
  if (llt.info() != Eigen::Success) throw std::domain_error("compute_omega: sigma is not positive definite");
  return std::max(0.0, mean_residual.dot(llt.solve(mean_residual)));
}

double compute_gamma(const Matrix& sample_cov, const Matrix& sigma) {
  if (sample_cov.rows() != sigma.rows() || sample_cov.cols() != sigma.cols() || sigma.rows() != sigma.cols())
    throw std::invalid_argument("compute_gamma: dimension mismatch");
  double scale = std::max(1.0, std::max(sample_cov.cwiseAbs().maxCoeff(), sigma.cwiseAbs().maxCoeff()));
  if ((sample_cov - sample_cov.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale ||
      (sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
    throw std::invalid_argument("compute_gamma: inputs must be symmetric");
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> eig(sample_cov, sigma, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
  if (eig.info() != Eigen::Success) throw std::domain_error("compute_gamma: generalized eigensolve failed");
  return std::max(0.0, eig.eigenvalues().maxCoeff());
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("empirical_quantile: empty input");
  if (p < 0 || p > 1) throw std::invalid_argument("empirical_quantile: p must lie in [0,1]");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<std::ptrdiff_t>(values.size());
  std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(std::ceil(p * static_cast<double>(n)));
  idx = std::clamp<std::ptrdiff_t>(idx, 1, n);
  return values[static_cast<std::size_t>(idx - 1)];
}

namespace {

double sample_sd(const std::vector<double>& values) {
  const auto n = values.size();
  if (n < 2) return 0.0;
  double mean = 0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double acc = 0;
  for (double v : values) acc += (v - mean) * (v - mean);
  return std::sqrt(acc / static_cast<double>(n - 1));
}

double mean_of(const std::vector<double>& values) {
  double acc = 0;
  for (double v : values) acc += v;
  return acc / static_cast<double>(values.size());
}

struct MomentPair {
  Vector mean;
  Matrix cov;
};

MomentPair resample_moments(const Matrix& residual_rows, double ridge_rel) {
  const Eigen::Index rows = residual_rows.rows();
  const Eigen::Index d = residual_rows.cols();
  if (rows < 2) throw std::domain_error("bootstrap: residual source returned fewer than two rows");
  MomentPair mp;
  mp.mean = residual_rows.colwise().mean();
  Matrix centered = residual_rows.rowwise() - mp.mean.transpose();
  mp.cov = centered.transpose() * centered / static_cast<double>(rows - 1);
  // Relative ridge keeps rank-deficient resamples invertible; the absolute
  // floor covers the all-zero-residual case.
  double ridge_abs = ridge_rel * (mp.cov.trace() / static_cast<double>(d) + 1e-6);
  mp.cov += ridge_abs * Matrix::Identity(d, d);
  return mp;
}

}  // namespace

EstimationReport run_estimation(int sample_count, int dim, const ResidualSource& source,
                                const BootstrapConfig& config) {
  config.validate();
  if (sample_count < 2) throw std::invalid_argument("bootstrap: need at least two samples");
  const int resample = config.resample_size > 0 ? config.resample_size : sample_count;
  const double q_level = config.lower_percentile ? config.significance : 1.0 - config.significance;
  Rng root(config.seed);

  EstimationReport rep;
  rep.config = config;
  rep.sigma_hat = Matrix::Zero(dim, dim);

  for (int i = 0; i < config.outer_count; ++i) {
    std::vector<MomentPair> inner;
    inner.reserve(config.inner_count);
    Matrix sigma_i = Matrix::Zero(dim, dim);
    for (int j = 0; j < config.inner_count; ++j) {
      Rng rng = root.fork(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
      std::vector<int> picked(resample);
      for (int t = 0; t < resample; ++t) picked[t] = static_cast<int>(rng.uniform_int(sample_count));
      Matrix rows = source(picked);
      if (rows.cols() != dim) throw std::invalid_argument("bootstrap: residual source returned wrong dimension");
      inner.push_back(resample_moments(rows, config.ridge));
      sigma_i += inner.back().cov;
    }
    if (!config.sum_inner_covariances) sigma_i /= static_cast<double>(config.inner_count);

    Eigen::LLT<Matrix> llt(sigma_i);
    if (llt.info() != Eigen::Success) throw std::domain_error("bootstrap: aggregated covariance not positive definite");
    std::vector<double> omegas, gammas;
    omegas.reserve(inner.size());
    gammas.reserve(inner.size());
    for (const auto& mp : inner) {
      omegas.push_back(std::max(0.0, mp.mean.dot(llt.solve(mp.mean))));
      gammas.push_back(compute_gamma(mp.cov, sigma_i));
    }
    rep.omega_per_outer.push_back(empirical_quantile(omegas, q_level));
    rep.gamma_per_outer.push_back(empirical_quantile(gammas, q_level));

    // Studentizing loop: re-bootstrap the inner constraint-parameter sets.
    std::vector<double> omega_reboot, gamma_reboot;
    omega_reboot.reserve(config.studentize_count);
    gamma_reboot.reserve(config.studentize_count);
    for (int k = 0; k < config.studentize_count; ++k) {
      Rng rng = root.fork(0x5a17ull + static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(k));
      std::vector<double> ow(omegas.size()), gw(gammas.size());
      for (std::size_t t = 0; t < omegas.size(); ++t) {
        ow[t] = omegas[static_cast<std::size_t>(rng.uniform_int(omegas.size()))];
        gw[t] = gammas[static_cast<std::size_t>(rng.uniform_int(gammas.size()))];
      }
      omega_reboot.push_back(empirical_quantile(ow, q_level));
      gamma_reboot.push_back(empirical_quantile(gw, q_level));
    }
    rep.omega_spread_per_outer.push_back(sample_sd(omega_reboot));
    rep.gamma_spread_per_outer.push_back(sample_sd(gamma_reboot));
    rep.sigma_hat += sigma_i;
  }

  rep.sigma_hat /= static_cast<double>(config.outer_count);
  rep.omega_hat = mean_of(rep.omega_per_outer);
  rep.gamma_hat = mean_of(rep.gamma_per_outer);
  rep.omega_spread = sample_sd(rep.omega_per_outer);
  rep.gamma_spread = sample_sd(rep.gamma_per_outer);

  auto region = [&](const std::vector<double>& per_outer, const std::vector<double>& spreads, double center,
                    double overall_spread, double& q_lo, double& q_hi,
                    bool& degenerate) -> std::array<double, 2> {
    std::vector<double> pivots;
    for (std::size_t i = 0; i < per_outer.size(); ++i)
      if (spreads[i] > 0) pivots.push_back((per_outer[i] - center) / spreads[i]);
    if (pivots.empty()) {
      degenerate = true;
      q_lo = q_hi = 0.0;
      return {center, center};
    }
    degenerate = false;
    q_lo = empirical_quantile(pivots, config.confidence / 2.0);
    q_hi = empirical_quantile(pivots, 1.0 - config.confidence / 2.0);
    return {center - overall_spread * q_hi, center - overall_spread * q_lo};
  };
  rep.omega_region = region(rep.omega_per_outer, rep.omega_spread_per_outer, rep.omega_hat, rep.omega_spread,
                            rep.omega_q_lo, rep.omega_q_hi, rep.omega_region_degenerate);
  rep.gamma_region = region(rep.gamma_per_outer, rep.gamma_spread_per_outer, rep.gamma_hat, rep.gamma_spread,
                            rep.gamma_q_lo, rep.gamma_q_hi, rep.gamma_region_degenerate);
  return rep;
}

EstimationReport run_estimation(const SeriesHistory& history, const PredictorSpec& spec, int horizon,
                                const BootstrapConfig& config) {
  // Resampleable unit: one prediction window (context rows + the following
  // horizon rows). The model is refitted on the rows covered by each
  // resample and measured on the same windows (or the out-of-bag windows).
  FittedPredictor probe = fit(spec, history);
  const int ctx = probe.min_context();
  const Eigen::Index n = history.observations.cols();
  const Eigen::Index windows = history.observations.rows() - ctx - horizon + 1;
  if (windows < 2) throw std::invalid_argument("bootstrap: history too short for two prediction windows");

  auto source = [&, ctx, horizon](const std::vector<int>& picked) -> Matrix {
    FittedPredictor fitted = spec.kind == PredictorSpec::Kind::ar
                                 ? fit_windows(spec, history, picked, ctx + horizon)
                                 : probe;

    std::vector<int> eval;
    if (config.held_out_residuals) {
      std::vector<bool> in(windows, false);
      for (int p : picked) in[p] = true;
      for (int w = 0; w < windows; ++w)
        if (!in[w]) eval.push_back(w);
      if (eval.size() < 2) eval = picked;  // everything landed in the resample
    } else {
      eval = picked;
    }

    Matrix rows(static_cast<Eigen::Index>(eval.size()), n * horizon);
    for (std::size_t t = 0; t < eval.size(); ++t) {
      Matrix predicted = fitted.predict_rows(history.observations.middleRows(eval[t], ctx), horizon);
      for (int s = 0; s < horizon; ++s)
        rows.row(t).segment(s * n, n) = history.observations.row(eval[t] + ctx + s) - predicted.row(s);
    }
    return rows;
  };

  return run_estimation(static_cast<int>(windows), static_cast<int>(n) * horizon, source, config);
}

MomentUncertaintySet build_uncertainty_set(const EstimationReport& report, const Vector& center,
                                           bool conservative) {
  if (center.size() != report.sigma_hat.rows())
    throw std::invalid_argument("build_uncertainty_set: center dimension mismatch");
  MomentUncertaintySet set;
  set.center = center;
  set.covariance = report.sigma_hat;
  set.omega = std::max(0.0, conservative ? report.omega_region[1] : report.omega_hat);
  set.gamma = std::max(1e-12, conservative ? report.gamma_region[1] : report.gamma_hat);
  return set;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

}  // namespace

std::string report_to_json(const EstimationReport& rep) {
  nlohmann::json j;
  j["sigma_hat"] = matrix_to_json(rep.sigma_hat);
  j["omega_hat"] = rep.omega_hat;
  j["gamma_hat"] = rep.gamma_hat;
  j["omega_region"] = {rep.omega_region[0], rep.omega_region[1]};
  j["gamma_region"] = {rep.gamma_region[0], rep.gamma_region[1]};
  j["per_outer"] = {{"omega", rep.omega_per_outer},
                    {"gamma", rep.gamma_per_outer},
                    {"omega_spread", rep.omega_spread_per_outer},
                    {"gamma_spread", rep.gamma_spread_per_outer}};
  j["quantiles"] = {{"omega_lo", rep.omega_q_lo},
                    {"omega_hi", rep.omega_q_hi},
                    {"gamma_lo", rep.gamma_q_lo},
                    {"gamma_hi", rep.gamma_q_hi},
                    {"omega_degenerate", rep.omega_region_degenerate},
                    {"gamma_degenerate", rep.gamma_region_degenerate},
                    {"omega_spread", rep.omega_spread},
                    {"gamma_spread", rep.gamma_spread}};
  j["config"] = {{"outer_count", rep.config.outer_count},
                 {"inner_count", rep.config.inner_count},
                 {"studentize_count", rep.config.studentize_count},
                 {"resample_size", rep.config.resample_size},
                 {"significance", rep.config.significance},
                 {"confidence", rep.config.confidence},
                 {"ridge", rep.config.ridge},
                 {"lower_percentile", rep.config.lower_percentile},
                 {"held_out_residuals", rep.config.held_out_residuals},
                 {"sum_inner_covariances", rep.config.sum_inner_covariances}};
  j["seed"] = rep.config.seed;
  return j.dump(2);
}

EstimationReport report_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  EstimationReport rep;
  rep.sigma_hat = matrix_from_json(j.at("sigma_hat"));
  rep.omega_hat = j.at("omega_hat").get<double>();
  rep.gamma_hat = j.at("gamma_hat").get<double>();
  rep.omega_region = {j.at("omega_region").at(0).get<double>(), j.at("omega_region").at(1).get<double>()};
  rep.gamma_region = {j.at("gamma_region").at(0).get<double>(), j.at("gamma_region").at(1).get<double>()};
  const auto& po = j.at("per_outer");
  rep.omega_per_outer = po.at("omega").get<std::vector<double>>();
  rep.gamma_per_outer = po.at("gamma").get<std::vector<double>>();
  rep.omega_spread_per_outer = po.at("omega_spread").get<std::vector<double>>();
  rep.gamma_spread_per_outer = po.at("gamma_spread").get<std::vector<double>>();
  const auto& q = j.at("quantiles");
  rep.omega_q_lo = q.at("omega_lo").get<double>();
  rep.omega_q_hi = q.at("omega_hi").get<double>();
  rep.gamma_q_lo = q.at("gamma_lo").get<double>();
  rep.gamma_q_hi = q.at("gamma_hi").get<double>();
  rep.omega_region_degenerate = q.at("omega_degenerate").get<bool>();
  rep.gamma_region_degenerate = q.at("gamma_degenerate").get<bool>();
  rep.omega_spread = q.at("omega_spread").get<double>();
  rep.gamma_spread = q.at("gamma_spread").get<double>();
  const auto& c = j.at("config");
  rep.config.outer_count = c.at("outer_count").get<int>();
  rep.config.inner_count = c.at("inner_count").get<int>();
  rep.config.studentize_count = c.at("studentize_count").get<int>();
  rep.config.resample_size = c.at("resample_size").get<int>();
  rep.config.significance = c.at("significance").get<double>();
  rep.config.confidence = c.at("confidence").get<double>();
  rep.config.ridge = c.at("ridge").get<double>();
  rep.config.lower_percentile = c.at("lower_percentile").get<bool>();
  rep.config.held_out_residuals = c.at("held_out_residuals").get<bool>();
  rep.config.sum_inner_covariances = c.at("sum_inner_covariances").get<bool>();
  rep.config.seed = j.at("seed").get<std::uint64_t>();
  return rep;
}

}  // namespace evbal
