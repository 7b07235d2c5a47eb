#pragma once

#include "evbal/conic/program.hpp"

namespace evbal::conic {

struct SolveSettings {
  double tol = 1e-6;
  int max_iter = 100000;
  double over_relax = 1.5;
  int check_every = 25;
  double infeas_tol = 1e-7;
  int ruiz_passes = 10;
  double kkt_reg = 1e-8;
  bool verbose = false;
};

enum class SolveStatus { optimal, primal_infeasible, dual_infeasible, max_iter };
std::string to_string(SolveStatus status);

struct ConicSolution {
  Vector primal;  // x
  Vector dual;    // y
  Vector slack;   // s
  SolveStatus status = SolveStatus::max_iter;
  double primal_residual = 0.0;  // relative, on unscaled data
  double dual_residual = 0.0;
  double duality_gap = 0.0;
  double objective = 0.0;  // c'x + offset
  int iterations = 0;
};

// Operator splitting on the homogeneous self-dual embedding: alternate a
// cached symmetric factorization solve with Euclidean cone projections.
// Residuals and the gap are measured on the unscaled data.
ConicSolution solve(const ConicProgram& program, const SolveSettings& settings = {});

// Independent recomputation of the optimality system; uses only sparse
// matrix-vector products on the program data.
struct KktReport {
  double primal_residual = 0.0;      // ||Ax + s - b|| / (1 + ||b||)
  double dual_residual = 0.0;        // ||A'y + c|| / (1 + ||c||)
  double duality_gap = 0.0;          // |c'x + b'y| / (1 + |c'x| + |b'y|)
  double complementarity = 0.0;      // |s'y| / (1 + ||s|| ||y||)
  double primal_cone_distance = 0.0; // max over blocks of dist(s, K)
  double dual_cone_distance = 0.0;   // max over blocks of dist(y, K*)

  double worst() const;
};

KktReport verify_kkt(const ConicProgram& program, const ConicSolution& solution);

}  // namespace evbal::conic
