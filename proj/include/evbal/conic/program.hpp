#pragma once

#include <Eigen/SparseCore>
#include <limits>
#include <string>
#include <vector>

#include "evbal/conic/cones.hpp"
#include "evbal/types.hpp"

namespace evbal::conic {

// Standard form: minimize c'x subject to A x + s = b, s in a product of
// cones. Variable bounds are mirrored into nonneg rows at build time and
// kept here for reporting.
struct ConicProgram {
  int num_vars = 0;
  Vector objective;                         // c
  double objective_offset = 0.0;            // constant added to reported objectives
  Eigen::SparseMatrix<double> constraints;  // A, row-compatible with `cones`
  Vector offset;                            // b
  std::vector<Cone> cones;
  std::vector<std::string> var_names;
  std::vector<std::string> block_names;
  Vector lower, upper;

  int num_rows() const { return static_cast<int>(offset.size()); }
  void validate() const;
};

// Affine expression over program variables.
struct LinExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;

  LinExpr() = default;
  /* implicit */ LinExpr(double c) : constant(c) {}
  static LinExpr variable(int var, double coeff = 1.0) {
    LinExpr e;
    e.terms.emplace_back(var, coeff);
    return e;
  }
  LinExpr& add(int var, double coeff) {
    if (coeff != 0.0) terms.emplace_back(var, coeff);
    return *this;
  }
  LinExpr& operator+=(const LinExpr& other);
  LinExpr operator-() const;
};

LinExpr operator+(LinExpr a, const LinExpr& b);
LinExpr operator-(LinExpr a, const LinExpr& b);
LinExpr operator*(double s, LinExpr a);

class ProgramBuilder {
 public:
  int add_variable(const std::string& name, double lower = -std::numeric_limits<double>::infinity(),
                   double upper = std::numeric_limits<double>::infinity(), double objective = 0.0);
  int num_vars() const { return static_cast<int>(names_.size()); }

  void add_objective(int var, double coeff);
  void add_objective_offset(double value) { objective_offset_ += value; }

  // expr == 0
  void add_equality(const LinExpr& expr, const std::string& name);
  // expr >= 0
  void add_nonneg(const LinExpr& expr, const std::string& name);
  // exprs[0] >= || exprs[1:] ||
  void add_soc(const std::vector<LinExpr>& exprs, const std::string& name);
  // 2 exprs[0] exprs[1] >= || exprs[2:] ||^2 with exprs[0], exprs[1] >= 0
  void add_rsoc(const std::vector<LinExpr>& exprs, const std::string& name);
  // Lower triangle of a symmetric matrix, column major; the block is
  // constrained positive semidefinite. Entries are plain matrix entries;
  // the builder applies the svec scaling.
  void add_psd(int order, const std::vector<LinExpr>& lower_triangle, const std::string& name);

  ConicProgram build() const;

 private:
  void push_rows(const std::vector<LinExpr>& exprs, Cone cone, const std::string& name);

  struct Row {
    double offset = 0.0;  // b entry
    std::vector<std::pair<int, double>> coeffs;  // A entries
  };
  std::vector<std::string> names_;
  std::vector<double> lower_, upper_, objective_;
  double objective_offset_ = 0.0;
  std::vector<Row> rows_;
  std::vector<Cone> cones_;
  std::vector<std::string> block_names_;
};

// Debug schema, loss-free: dump and load round-trip to an equal program.
std::string program_to_json(const ConicProgram& program);
ConicProgram program_from_json(const std::string& text);

}  // namespace evbal::conic
