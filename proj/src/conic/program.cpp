#include "evbal/conic/program.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace evbal::conic {

namespace {
constexpr double kSqrt2 = 1.4142135623730950488016887242097;
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

void ConicProgram::validate() const {
  if (num_vars <= 0) throw std::invalid_argument("program: no variables");
  if (objective.size() != num_vars) throw std::invalid_argument("program: objective length mismatch");
  int rows = 0;
  for (const auto& c : cones) {
    if (c.dim <= 0) throw std::invalid_argument("program: empty cone block");
    if (c.kind == ConeKind::soc && c.dim < 1) throw std::invalid_argument("program: soc needs rows");
    if (c.kind == ConeKind::rsoc && c.dim < 2) throw std::invalid_argument("program: rsoc needs two leading rows");
    if (c.kind == ConeKind::psd && c.dim != svec_dim(c.order))
      throw std::invalid_argument("program: psd block row count does not match its order");
    rows += c.dim;
  }
  if (rows != offset.size() || constraints.rows() != rows || constraints.cols() != num_vars)
    throw std::invalid_argument("program: constraint shape mismatch");
}

LinExpr& LinExpr::operator+=(const LinExpr& other) {
  constant += other.constant;
  terms.insert(terms.end(), other.terms.begin(), other.terms.end());
  return *this;
}

LinExpr LinExpr::operator-() const {
  LinExpr out;
  out.constant = -constant;
  out.terms.reserve(terms.size());
  for (auto [v, c] : terms) out.terms.emplace_back(v, -c);
  return out;
}

LinExpr operator+(LinExpr a, const LinExpr& b) {
  a += b;
  return a;
}

LinExpr operator-(LinExpr a, const LinExpr& b) {
  a += -b;
  return a;
}

LinExpr operator*(double s, LinExpr a) {
  a.constant *= s;
  for (auto& [v, c] : a.terms) c *= s;
  return a;
}

int ProgramBuilder::add_variable(const std::string& name, double lower, double upper, double objective) {
  names_.push_back(name);
  lower_.push_back(lower);
  upper_.push_back(upper);
  objective_.push_back(objective);
  return static_cast<int>(names_.size()) - 1;
}

void ProgramBuilder::add_objective(int var, double coeff) {
  objective_.at(static_cast<std::size_t>(var)) += coeff;
}

void ProgramBuilder::push_rows(const std::vector<LinExpr>& exprs, Cone cone, const std::string& name) {
  if (static_cast<int>(exprs.size()) != cone.dim)
    throw std::invalid_argument("program: row count does not match cone dimension for " + name);
  for (const auto& e : exprs) {
    Row row;
    row.offset = e.constant;
    row.coeffs = e.terms;
    rows_.push_back(std::move(row));
  }
  cones_.push_back(cone);
  block_names_.push_back(name);
}

void ProgramBuilder::add_equality(const LinExpr& expr, const std::string& name) {
  push_rows({expr}, Cone::zero(1), name);
}

void ProgramBuilder::add_nonneg(const LinExpr& expr, const std::string& name) {
  push_rows({expr}, Cone::nonneg(1), name);
}

void ProgramBuilder::add_soc(const std::vector<LinExpr>& exprs, const std::string& name) {
  if (exprs.size() < 2) throw std::invalid_argument("program: soc block needs at least two rows");
  push_rows(exprs, Cone::soc(static_cast<int>(exprs.size())), name);
}

void ProgramBuilder::add_rsoc(const std::vector<LinExpr>& exprs, const std::string& name) {
  if (exprs.size() < 3) throw std::invalid_argument("program: rsoc block needs at least three rows");
  push_rows(exprs, Cone::rsoc(static_cast<int>(exprs.size())), name);
}

void ProgramBuilder::add_psd(int order, const std::vector<LinExpr>& lower_triangle, const std::string& name) {
  if (static_cast<int>(lower_triangle.size()) != svec_dim(order))
    throw std::invalid_argument("program: psd block needs order*(order+1)/2 entries");
  std::vector<LinExpr> scaled;
  scaled.reserve(lower_triangle.size());
  int idx = 0;
  for (int c = 0; c < order; ++c)
    for (int r = c; r < order; ++r, ++idx)
      scaled.push_back(r == c ? lower_triangle[idx] : kSqrt2 * lower_triangle[idx]);
  push_rows(scaled, Cone::psd(order), name);
}

ConicProgram ProgramBuilder::build() const {
  ConicProgram p;
  p.num_vars = num_vars();
  if (p.num_vars == 0) throw std::invalid_argument("program: no variables");
  p.var_names = names_;
  p.objective = Eigen::Map<const Vector>(objective_.data(), p.num_vars);
  p.objective_offset = objective_offset_;
  p.lower = Eigen::Map<const Vector>(lower_.data(), p.num_vars);
  p.upper = Eigen::Map<const Vector>(upper_.data(), p.num_vars);

  std::vector<Row> rows = rows_;
  std::vector<Cone> cones = cones_;
  std::vector<std::string> block_names = block_names_;

  int bound_rows = 0;
  for (int v = 0; v < p.num_vars; ++v) {
    if (lower_[v] > -kInf) {
      Row r;
      r.offset = -lower_[v];
      r.coeffs = {{v, 1.0}};
      rows.push_back(std::move(r));
      ++bound_rows;
    }
    if (upper_[v] < kInf) {
      Row r;
      r.offset = upper_[v];
      r.coeffs = {{v, -1.0}};
      rows.push_back(std::move(r));
      ++bound_rows;
    }
  }
  if (bound_rows > 0) {
    cones.push_back(Cone::nonneg(bound_rows));
    block_names.push_back("var_bounds");
  }

  const int m = static_cast<int>(rows.size());
  p.offset = Vector(m);
  std::vector<Eigen::Triplet<double>> triplets;
  for (int i = 0; i < m; ++i) {
    p.offset(i) = rows[i].offset;
    for (auto [v, coeff] : rows[i].coeffs) {
      if (v < 0 || v >= p.num_vars) throw std::invalid_argument("program: row references unknown variable");
      // Expression value equals the slack: s = b - A x with b = constant,
      // A = -coefficients.
      triplets.emplace_back(i, v, -coeff);
    }
  }
  p.constraints = Eigen::SparseMatrix<double>(m, p.num_vars);
  p.constraints.setFromTriplets(triplets.begin(), triplets.end());
  p.constraints.makeCompressed();
  p.cones = cones;
  p.block_names = block_names;
  p.validate();
  return p;
}

std::string program_to_json(const ConicProgram& p) {
  nlohmann::json j;
  j["vars"] = p.var_names;
  j["objective"] = std::vector<double>(p.objective.data(), p.objective.data() + p.objective.size());
  j["objective_offset"] = p.objective_offset;
  auto bound_list = [](const Vector& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
      out.push_back(std::isfinite(v(i)) ? nlohmann::json(v(i)) : nlohmann::json());
    return out;
  };
  j["lower"] = p.lower.size() ? bound_list(p.lower) : nlohmann::json::array();
  j["upper"] = p.upper.size() ? bound_list(p.upper) : nlohmann::json::array();

  Eigen::SparseMatrix<double, Eigen::RowMajor> by_row(p.constraints);
  nlohmann::json blocks = nlohmann::json::array();
  int row = 0;
  for (std::size_t bi = 0; bi < p.cones.size(); ++bi) {
    const Cone& c = p.cones[bi];
    nlohmann::json block;
    block["name"] = bi < p.block_names.size() ? p.block_names[bi] : "";
    block["cone"] = to_string(c.kind);
    block["dim"] = c.dim;
    block["order"] = c.order;
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < c.dim; ++r, ++row) {
      nlohmann::json jr;
      jr["b"] = p.offset(row);
      nlohmann::json terms = nlohmann::json::array();
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(by_row, row); it; ++it)
        terms.push_back({it.col(), it.value()});
      jr["a"] = terms;
      rows.push_back(jr);
    }
    block["rows"] = rows;
    blocks.push_back(block);
  }
  j["blocks"] = blocks;
  return j.dump();
}

ConicProgram program_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  ConicProgram p;
  p.var_names = j.at("vars").get<std::vector<std::string>>();
  p.num_vars = static_cast<int>(p.var_names.size());
  auto obj = j.at("objective").get<std::vector<double>>();
  p.objective = Eigen::Map<const Vector>(obj.data(), static_cast<Eigen::Index>(obj.size()));
  p.objective_offset = j.at("objective_offset").get<double>();
  auto parse_bounds = [&](const nlohmann::json& arr, double missing) {
    Vector v = Vector::Constant(p.num_vars, missing);
    for (std::size_t i = 0; i < arr.size(); ++i)
      if (!arr[i].is_null()) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    return v;
  };
  p.lower = parse_bounds(j.at("lower"), -kInf);
  p.upper = parse_bounds(j.at("upper"), kInf);

  std::vector<Eigen::Triplet<double>> triplets;
  std::vector<double> offsets;
  int row = 0;
  for (const auto& block : j.at("blocks")) {
    Cone c;
    c.kind = cone_kind_from_string(block.at("cone").get<std::string>());
    c.dim = block.at("dim").get<int>();
    c.order = block.at("order").get<int>();
    p.cones.push_back(c);
    p.block_names.push_back(block.at("name").get<std::string>());
    for (const auto& jr : block.at("rows")) {
      offsets.push_back(jr.at("b").get<double>());
      for (const auto& t : jr.at("a")) triplets.emplace_back(row, t.at(0).get<int>(), t.at(1).get<double>());
      ++row;
    }
  }
  p.offset = Eigen::Map<const Vector>(offsets.data(), static_cast<Eigen::Index>(offsets.size()));
  p.constraints = Eigen::SparseMatrix<double>(row, p.num_vars);
  p.constraints.setFromTriplets(triplets.begin(), triplets.end());
  p.constraints.makeCompressed();
  p.validate();
  return p;
}

}  // namespace evbal::conic
