#include "evbal/conic/cones.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace evbal::conic {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
}

std::string to_string(ConeKind kind) {
  switch (kind) {
    case ConeKind::zero: return "zero";
    case ConeKind::nonneg: return "nonneg";
    case ConeKind::soc: return "soc";
    case ConeKind::rsoc: return "rsoc";
    case ConeKind::psd: return "psd";
  }
  return "?";
}

ConeKind cone_kind_from_string(const std::string& name) {
  if (name == "zero") return ConeKind::zero;
  if (name == "nonneg") return ConeKind::nonneg;
  if (name == "soc") return ConeKind::soc;
  if (name == "rsoc") return ConeKind::rsoc;
  if (name == "psd") return ConeKind::psd;
  throw std::invalid_argument("unknown cone kind: " + name);
}

int svec_dim(int order) { return order * (order + 1) / 2; }

int svec_index(int row, int col, int order) {
  if (row < col) std::swap(row, col);
  return col * order - col * (col - 1) / 2 + (row - col);
}

Vector svec(const Matrix& m) {
  const int order = static_cast<int>(m.rows());
  Vector out(svec_dim(order));
  int idx = 0;
  for (int c = 0; c < order; ++c)
    for (int r = c; r < order; ++r, ++idx) out(idx) = r == c ? m(r, c) : kSqrt2 * m(r, c);
  return out;
}

Matrix svec_inverse(const Vector& coords, int order) {
  if (coords.size() != svec_dim(order)) throw std::invalid_argument("svec_inverse: wrong length");
  Matrix m(order, order);
  int idx = 0;
  for (int c = 0; c < order; ++c)
    for (int r = c; r < order; ++r, ++idx) {
      double v = r == c ? coords(idx) : coords(idx) / kSqrt2;
      m(r, c) = v;
      m(c, r) = v;
    }
  return m;
}

namespace {

Vector project_soc(const Vector& point) {
  const double t = point(0);
  const double vnorm = point.tail(point.size() - 1).norm();
  if (vnorm <= t) return point;
  if (vnorm <= -t) return Vector::Zero(point.size());
  Vector out(point.size());
  const double alpha = 0.5 * (t + vnorm);
  out(0) = alpha;
  out.tail(point.size() - 1) = (alpha / vnorm) * point.tail(point.size() - 1);
  return out;
}

// Orthogonal involution mapping the rotated cone onto the standard one.
Vector rsoc_rotate(const Vector& point) {
  Vector out = point;
  out(0) = (point(0) + point(1)) / kSqrt2;
  out(1) = (point(0) - point(1)) / kSqrt2;
  return out;
}

Vector project_psd(const Vector& point, int order) {
  Matrix m = svec_inverse(point, order);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m);
  Matrix clamped = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).asDiagonal() *
                   eig.eigenvectors().transpose();
  return svec(clamped);
}

}  // namespace

Vector project_cone(const Vector& point, const Cone& cone) {
  if (point.size() != cone.dim) throw std::invalid_argument("project_cone: dimension mismatch");
  switch (cone.kind) {
    case ConeKind::zero: return Vector::Zero(point.size());
    case ConeKind::nonneg: return point.cwiseMax(0.0);
    case ConeKind::soc: return project_soc(point);
    case ConeKind::rsoc: return rsoc_rotate(project_soc(rsoc_rotate(point)));
    case ConeKind::psd: return project_psd(point, cone.order);
  }
  return point;
}

Vector project_dual_cone(const Vector& point, const Cone& cone) {
  if (cone.kind == ConeKind::zero) return point;  // dual of {0} is everything
  return project_cone(point, cone);
}

double cone_distance(const Vector& point, const Cone& cone) {
  return (point - project_cone(point, cone)).norm();
}

double dual_cone_distance(const Vector& point, const Cone& cone) {
  return (point - project_dual_cone(point, cone)).norm();
}

}  // namespace evbal::conic
