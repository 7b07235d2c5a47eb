#pragma once

#include <string>

#include "evbal/types.hpp"

namespace evbal::conic {

enum class ConeKind { zero, nonneg, soc, rsoc, psd };

struct Cone {
  ConeKind kind = ConeKind::zero;
  int dim = 0;    // rows occupied in the slack vector
  int order = 0;  // matrix order for psd blocks, otherwise 0

  static Cone zero(int dim) { return {ConeKind::zero, dim, 0}; }
  static Cone nonneg(int dim) { return {ConeKind::nonneg, dim, 0}; }
  static Cone soc(int dim) { return {ConeKind::soc, dim, 0}; }
  static Cone rsoc(int dim) { return {ConeKind::rsoc, dim, 0}; }
  static Cone psd(int order) { return {ConeKind::psd, order * (order + 1) / 2, order}; }
};

std::string to_string(ConeKind kind);
ConeKind cone_kind_from_string(const std::string& name);

// Scaled-symmetric coordinates: column-major lower triangle with
// off-diagonal entries multiplied by sqrt(2), so that <svec(A), svec(B)>
// equals the Frobenius inner product.
int svec_dim(int order);
int svec_index(int row, int col, int order);
Vector svec(const Matrix& symmetric);
Matrix svec_inverse(const Vector& coords, int order);

// Euclidean projections.
Vector project_cone(const Vector& point, const Cone& cone);
Vector project_dual_cone(const Vector& point, const Cone& cone);

// Distance from the cone (zero when inside).
double cone_distance(const Vector& point, const Cone& cone);
double dual_cone_distance(const Vector& point, const Cone& cone);

}  // namespace evbal::conic
