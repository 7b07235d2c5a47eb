#include "evbal/conic/solver.hpp"

#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace evbal::conic {

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::primal_infeasible: return "primal_infeasible";
    case SolveStatus::dual_infeasible: return "dual_infeasible";
    case SolveStatus::max_iter: return "max_iter";
  }
  return "?";
}

namespace {

// Per-cone-block views of an m-vector.
struct BlockSpan {
  int start;
  Cone cone;
};

std::vector<BlockSpan> block_spans(const ConicProgram& p) {
  std::vector<BlockSpan> spans;
  int row = 0;
  for (const Cone& c : p.cones) {
    spans.push_back({row, c});
    row += c.dim;
  }
  return spans;
}

void project_dual_blocks(Vector& y, const std::vector<BlockSpan>& spans) {
  for (const auto& s : spans) {
    if (s.cone.kind == ConeKind::zero) continue;  // dual is free
    y.segment(s.start, s.cone.dim) = project_cone(y.segment(s.start, s.cone.dim), s.cone);
  }
}

// Block-uniform Ruiz equilibration. Rows of one cone block share a scale so
// the scaled slack stays inside the same cone.
void equilibrate(const Eigen::SparseMatrix<double>& a, const std::vector<BlockSpan>& spans, int passes,
                 Vector& row_scale, Vector& col_scale) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  row_scale = Vector::Ones(m);
  col_scale = Vector::Ones(n);
  Eigen::SparseMatrix<double, Eigen::RowMajor> ar(a);

  for (int pass = 0; pass < passes; ++pass) {
    Vector row_norm = Vector::Zero(m);
    Vector col_norm = Vector::Zero(n);
    for (int i = 0; i < m; ++i)
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ar, i); it; ++it) {
        double v = std::abs(it.value()) * row_scale(i) * col_scale(it.col());
        row_norm(i) = std::max(row_norm(i), v);
        col_norm(it.col()) = std::max(col_norm(it.col()), v);
      }
    for (const auto& s : spans) {
      if (s.cone.kind == ConeKind::zero || s.cone.kind == ConeKind::nonneg) continue;
      double block_max = row_norm.segment(s.start, s.cone.dim).maxCoeff();
      row_norm.segment(s.start, s.cone.dim).setConstant(block_max);
    }
    for (int i = 0; i < m; ++i)
      if (row_norm(i) > 0) row_scale(i) /= std::sqrt(row_norm(i));
    for (int jcol = 0; jcol < n; ++jcol)
      if (col_norm(jcol) > 0) col_scale(jcol) /= std::sqrt(col_norm(jcol));
  }
}

struct Candidate {
  Vector x, y, s;
  double pres, dres, gap, pobj, dobj;
};

}  // namespace

ConicSolution solve(const ConicProgram& program, const SolveSettings& settings) {
  program.validate();
  const int n = program.num_vars;
  const int m = program.num_rows();
  const auto spans = block_spans(program);

  // Scaling.
  Vector d, e;
  equilibrate(program.constraints, spans, settings.ruiz_passes, d, e);
  Eigen::SparseMatrix<double> a_scaled = d.asDiagonal() * program.constraints * e.asDiagonal();
  a_scaled.makeCompressed();
  Vector b_scaled = d.asDiagonal() * program.offset;
  Vector c_scaled = e.asDiagonal() * program.objective;
  const double b_norm_scale = std::max(b_scaled.norm(), 1.0);
  const double c_norm_scale = std::max(c_scaled.norm(), 1.0);
  b_scaled /= b_norm_scale;
  c_scaled /= c_norm_scale;

  // Factor I + A'A once (static regularization on the diagonal).
  Eigen::SparseMatrix<double> kkt =
      Eigen::SparseMatrix<double>(a_scaled.transpose()) * a_scaled;
  Eigen::SparseMatrix<double> eye(n, n);
  eye.setIdentity();
  kkt += (1.0 + settings.kkt_reg) * eye;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol(kkt);
  if (chol.info() != Eigen::Success) throw std::runtime_error("solver: KKT factorization failed");

  auto solve_m = [&](const Vector& wx, const Vector& wy, Vector& zx, Vector& zy) {
    zx = chol.solve(wx - a_scaled.transpose() * wy);
    zy = wy + a_scaled * zx;
  };

  Vector gx(n), gy(m);
  solve_m(c_scaled, b_scaled, gx, gy);
  const double gh = 1.0 + c_scaled.dot(gx) + b_scaled.dot(gy);

  // Iterate storage: u = (x, y, tau), v = (0, s, kappa).
  Vector ux = Vector::Zero(n), uy = Vector::Zero(m);
  double utau = 1.0;
  Vector vs = Vector::Zero(m);
  double vkappa = 1.0;

  const double b_full_norm = program.offset.norm();
  const double c_full_norm = program.objective.norm();

  ConicSolution best;
  best.status = SolveStatus::max_iter;
  double best_worst = std::numeric_limits<double>::infinity();

  Vector wx(n), wy(m), px(n), py(m), tx(n), ty(m);
  int iter = 0;
  for (; iter < settings.max_iter; ++iter) {
    // Linear step: (I + Q)^{-1} (u + v).
    wx = ux;
    wy = uy + vs;
    const double wtau = utau + vkappa;
    solve_m(wx, wy, px, py);
    const double ztau = (wtau + c_scaled.dot(px) + b_scaled.dot(py)) / gh;
    tx = px - ztau * gx;
    ty = py - ztau * gy;

    // Over-relaxation, then the cone step.
    const double alpha = settings.over_relax;
    tx = alpha * tx + (1.0 - alpha) * ux;
    ty = alpha * ty + (1.0 - alpha) * uy;
    const double ttau = alpha * ztau + (1.0 - alpha) * utau;

    Vector ux_new = tx;  // x part is free
    Vector uy_new = ty - vs;
    double utau_new = std::max(0.0, ttau - vkappa);
    project_dual_blocks(uy_new, spans);

    vs += uy_new - ty;
    vkappa += utau_new - ttau;
    ux = std::move(ux_new);
    uy = std::move(uy_new);
    utau = utau_new;

    if ((iter + 1) % settings.check_every != 0 && iter + 1 != settings.max_iter) continue;

    // Candidate solution on unscaled data.
    if (utau > 1e-9 * std::max(1.0, vkappa)) {
      Candidate cand;
      cand.x = (b_norm_scale / utau) * e.asDiagonal() * ux;
      cand.y = (c_norm_scale / utau) * d.asDiagonal() * uy;
      cand.s = (b_norm_scale / utau) * d.cwiseInverse().asDiagonal() * vs;
      Vector prim = program.constraints * cand.x + cand.s - program.offset;
      Vector dual = program.constraints.transpose() * cand.y + program.objective;
      cand.pobj = program.objective.dot(cand.x);
      cand.dobj = -program.offset.dot(cand.y);
      cand.pres = prim.norm() / (1.0 + b_full_norm);
      cand.dres = dual.norm() / (1.0 + c_full_norm);
      cand.gap = std::abs(cand.pobj - cand.dobj) / (1.0 + std::abs(cand.pobj) + std::abs(cand.dobj));
      double worst = std::max({cand.pres, cand.dres, cand.gap});
      if (worst < best_worst) {
        best_worst = worst;
        best.primal = cand.x;
        best.dual = cand.y;
        best.slack = cand.s;
        best.primal_residual = cand.pres;
        best.dual_residual = cand.dres;
        best.duality_gap = cand.gap;
        best.objective = cand.pobj + program.objective_offset;
        best.iterations = iter + 1;
      }
      if (settings.verbose && ((iter + 1) % (settings.check_every * 40) == 0))
        std::printf("iter %6d pres %9.2e dres %9.2e gap %9.2e\n", iter + 1, cand.pres, cand.dres, cand.gap);
      if (cand.pres <= settings.tol && cand.dres <= settings.tol && cand.gap <= settings.tol) {
        best.status = SolveStatus::optimal;
        best.iterations = iter + 1;
        return best;
      }
    }

    // Certificates on the raw (un-normalized) directions.
    Vector dir_x = e.asDiagonal() * ux;
    Vector dir_s = d.cwiseInverse().asDiagonal() * vs;
    const double ip_c = program.objective.dot(dir_x);
    if (ip_c < 0) {
      double res = (program.constraints * dir_x + dir_s).norm() * std::max(c_full_norm, 1.0) / (-ip_c);
      if (res <= settings.infeas_tol) {
        best.status = SolveStatus::dual_infeasible;
        best.primal = dir_x / (-ip_c);
        best.dual = Vector::Zero(m);
        best.slack = dir_s / (-ip_c);
        best.iterations = iter + 1;
        return best;
      }
    }
    Vector dir_y = d.asDiagonal() * uy;
    const double ip_b = program.offset.dot(dir_y);
    if (ip_b < 0) {
      double res = (program.constraints.transpose() * dir_y).norm() * std::max(b_full_norm, 1.0) / (-ip_b);
      if (res <= settings.infeas_tol) {
        best.status = SolveStatus::primal_infeasible;
        best.dual = dir_y / (-ip_b);
        best.primal = Vector::Zero(n);
        best.slack = Vector::Zero(m);
        best.iterations = iter + 1;
        return best;
      }
    }
  }

  best.iterations = iter;
  if (best.primal.size() == 0) {
    best.primal = Vector::Zero(n);
    best.dual = Vector::Zero(m);
    best.slack = Vector::Zero(m);
  }
  return best;
}

double KktReport::worst() const {
  return std::max({primal_residual, dual_residual, duality_gap, complementarity, primal_cone_distance,
                   dual_cone_distance});
}

KktReport verify_kkt(const ConicProgram& program, const ConicSolution& solution) {
  KktReport rep;
  const Vector& x = solution.primal;
  const Vector& y = solution.dual;
  const Vector& s = solution.slack;
  if (x.size() != program.num_vars || y.size() != program.num_rows() || s.size() != program.num_rows())
    throw std::invalid_argument("verify_kkt: solution shape mismatch");

  Vector prim = program.constraints * x + s - program.offset;
  Vector dual = program.constraints.transpose() * y + program.objective;
  rep.primal_residual = prim.norm() / (1.0 + program.offset.norm());
  rep.dual_residual = dual.norm() / (1.0 + program.objective.norm());
  double pobj = program.objective.dot(x);
  double dobj = -program.offset.dot(y);
  rep.duality_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
  rep.complementarity = std::abs(s.dot(y)) / (1.0 + s.norm() * y.norm());

  int row = 0;
  for (const Cone& c : program.cones) {
    rep.primal_cone_distance = std::max(rep.primal_cone_distance, cone_distance(s.segment(row, c.dim), c));
    rep.dual_cone_distance = std::max(rep.dual_cone_distance, dual_cone_distance(y.segment(row, c.dim), c));
    row += c.dim;
  }
  return rep;
}

}  // namespace evbal::conic
