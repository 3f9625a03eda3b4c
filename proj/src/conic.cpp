#include "convexfem/conic.hpp"

#include <cmath>

namespace convexfem {

bool cone_contains(const Cone& cone, Eigen::Ref<const Eigen::VectorXd> z,
                   double tol) {
  if (z.size() != cone.dim)
    throw std::invalid_argument("cone membership: dimension mismatch");
  return cone_violation(cone, z) <= tol;
}

double cone_violation(const Cone& cone, Eigen::Ref<const Eigen::VectorXd> z) {
  switch (cone.kind) {
    case ConeKind::Free:
      return 0.0;
    case ConeKind::NonNeg:
      return std::max(0.0, -z.minCoeff());
    case ConeKind::Quad:
      return std::max(0.0, z.tail(z.size() - 1).norm() - z(0));
    case ConeKind::RQuad: {
      double v = std::max({0.0, -z(0), -z(1)});
      double resid = z.tail(z.size() - 2).squaredNorm() - 2 * z(0) * z(1);
      return std::max(v, resid > 0 ? resid : 0.0);
    }
  }
  return 0.0;
}

int ConicRepr::aux_total() const {
  int total = 0;
  for (const auto& b : aux) total += b.dim;
  return total;
}

std::vector<std::string> validate_repr(const ConicRepr& repr) {
  std::vector<std::string> diags;
  if (repr.input_dim < 0) diags.push_back("negative input dimension");
  for (size_t j = 0; j < repr.aux.size(); ++j) {
    const auto& b = repr.aux[j];
    if (b.dim <= 0)
      diags.push_back("aux block " + std::to_string(j) + " has dim <= 0");
    if (b.cone.dim != b.dim)
      diags.push_back("aux block " + std::to_string(j) +
                      " cone dim differs from block dim");
    if (b.cone.kind == ConeKind::Quad && b.dim < 1)
      diags.push_back("aux block " + std::to_string(j) + ": Quad needs dim>=1");
    if (b.cone.kind == ConeKind::RQuad && b.dim < 2)
      diags.push_back("aux block " + std::to_string(j) +
                      ": RQuad needs dim >= 2");
  }
  for (size_t r = 0; r < repr.rows.size(); ++r) {
    const auto& row = repr.rows[r];
    Eigen::Index nrows = -1;
    auto check = [&](const Eigen::MatrixXd& m, const std::string& what) {
      if (!m.size()) return;
      if (nrows < 0) nrows = m.rows();
      if (m.rows() != nrows)
        diags.push_back("row block " + std::to_string(r) + ": " + what +
                        " row count mismatch");
    };
    check(row.on_input, "input coefficients");
    if (row.on_input.size() && row.on_input.cols() != repr.input_dim)
      diags.push_back("row block " + std::to_string(r) +
                      ": input coefficient column count mismatch");
    if (row.on_aux.size() != repr.aux.size())
      diags.push_back("row block " + std::to_string(r) +
                      ": aux coefficient list length mismatch");
    for (size_t j = 0; j < row.on_aux.size() && j < repr.aux.size(); ++j) {
      check(row.on_aux[j], "aux block " + std::to_string(j));
      if (row.on_aux[j].size() && row.on_aux[j].cols() != repr.aux[j].dim)
        diags.push_back("row block " + std::to_string(r) + ": aux block " +
                        std::to_string(j) + " column count mismatch");
    }
    if (nrows < 0) {
      diags.push_back("row block " + std::to_string(r) + " is empty");
      nrows = 0;
    }
    if (row.lower.size() != nrows || row.upper.size() != nrows)
      diags.push_back("row block " + std::to_string(r) + " bound size mismatch");
    for (Eigen::Index i = 0; i < std::min(row.lower.size(), row.upper.size());
         ++i)
      if (row.lower(i) > row.upper(i))
        diags.push_back("row block " + std::to_string(r) + " has crossed bounds");
  }
  if (repr.cost_input.size() && repr.cost_input.size() != repr.input_dim)
    diags.push_back("input cost size mismatch");
  if (repr.cost_aux.size() && repr.cost_aux.size() != repr.aux_total())
    diags.push_back("aux cost size mismatch");
  return diags;
}

void StandardConicProgram::validate() const {
  const int n = num_vars();
  if (A.cols() != n) throw std::invalid_argument("A column count mismatch");
  if (A.rows() != num_rows() || row_upper.size() != num_rows())
    throw std::invalid_argument("row bound size mismatch");
  if (var_lower.size() != n || var_upper.size() != n)
    throw std::invalid_argument("variable bound size mismatch");
  int at = 0;
  for (const auto& seg : cones) {
    if (seg.start != at)
      throw std::invalid_argument("cone segments do not partition variables");
    at += seg.cone.dim;
  }
  if (at != n)
    throw std::invalid_argument("cone segments do not cover all variables");
  for (int i = 0; i < n; ++i)
    if (var_lower(i) > var_upper(i))
      throw std::invalid_argument("crossed variable bounds");
  for (int i = 0; i < num_rows(); ++i)
    if (row_lower(i) > row_upper(i))
      throw std::invalid_argument("crossed row bounds");
}

int ProgramBuilder::add_vars(int count, double lower, double upper) {
  int start = num_vars_;
  num_vars_ += count;
  cost_.resize(num_vars_, 0.0);
  var_lower_.resize(num_vars_, lower);
  var_upper_.resize(num_vars_, upper);
  if (!cones_.empty() && cones_.back().cone.kind == ConeKind::Free)
    cones_.back().cone.dim += count;
  else
    cones_.push_back({Cone::free(count), start});
  return start;
}

int ProgramBuilder::add_cone_vars(const Cone& cone) {
  if (cone.kind == ConeKind::Free) return add_vars(cone.dim);
  int start = num_vars_;
  num_vars_ += cone.dim;
  cost_.resize(num_vars_, 0.0);
  var_lower_.resize(num_vars_, -kInf);
  var_upper_.resize(num_vars_, kInf);
  cones_.push_back({cone, start});
  return start;
}

void ProgramBuilder::set_var_bounds(int index, double lower, double upper) {
  var_lower_[index] = lower;
  var_upper_[index] = upper;
}

void ProgramBuilder::add_cost(int index, double value) { cost_[index] += value; }

int ProgramBuilder::add_row(const std::vector<std::pair<int, double>>& entries,
                            double lower, double upper) {
  int row = num_rows();
  for (const auto& [col, val] : entries) {
    if (col < 0 || col >= num_vars_)
      throw std::logic_error("row references an undeclared variable");
    if (val != 0.0) triplets_.emplace_back(row, col, val);
  }
  row_lower_.push_back(lower);
  row_upper_.push_back(upper);
  return row;
}

void ProgramBuilder::set_row_bounds(int row, double lower, double upper) {
  row_lower_[row] = lower;
  row_upper_[row] = upper;
}

StandardConicProgram ProgramBuilder::build() const {
  StandardConicProgram p;
  p.cost = Eigen::Map<const Eigen::VectorXd>(cost_.data(), cost_.size());
  p.cost_offset = cost_offset_;
  p.A.resize(num_rows(), num_vars_);
  p.A.setFromTriplets(triplets_.begin(), triplets_.end());
  p.row_lower =
      Eigen::Map<const Eigen::VectorXd>(row_lower_.data(), row_lower_.size());
  p.row_upper =
      Eigen::Map<const Eigen::VectorXd>(row_upper_.data(), row_upper_.size());
  p.var_lower =
      Eigen::Map<const Eigen::VectorXd>(var_lower_.data(), var_lower_.size());
  p.var_upper =
      Eigen::Map<const Eigen::VectorXd>(var_upper_.data(), var_upper_.size());
  p.cones = cones_;
  p.maximize = maximize_;
  return p;
}

ExpansionInfo expand_term(const ConvexTermInstance& term,
                          ProgramBuilder& builder, const BlockIndexMap& blocks) {
  auto diags = validate_repr(term.repr);
  if (!diags.empty())
    throw std::invalid_argument("invalid conic template: " + diags.front());
  if (term.repr.input_dim != term.input.out_dim)
    throw std::invalid_argument(
        "template input dimension does not match the expression");
  if (term.scale <= 0.0)
    throw std::invalid_argument("term scale must be positive");

  const TriMesh* mesh = nullptr;
  for (const auto& t : term.input.terms)
    if (t.space) mesh = &t.space->mesh();
  if (!mesh) throw std::invalid_argument("expression references no space");
  const bool on_cells = term.measure.kind == Measure::Cells;
  if ((term.quad.domain == QuadRule::Cell) != on_cells)
    throw std::invalid_argument("quadrature domain does not match measure");

  ExpansionInfo info;
  info.aux_start = builder.num_vars();
  info.first_row = builder.num_rows();

  for (int id : measure_entities(*mesh, term.measure)) {
    const double size = entity_measure(*mesh, term.measure, id);
    const double escale = term.entity_scale ? term.entity_scale(id) : 1.0;
    for (size_t g = 0; g < term.quad.points.size(); ++g) {
      const double weight = term.quad.weights[g] * size * term.scale * escale;
      ExprRows rows;
      if (on_cells)
        rows = eval_expr_rows(term.input, CellPoint{id, term.quad.points[g]});
      else
        rows = eval_expr_rows(term.input,
                              FacetPoint{id, term.quad.points[g](0),
                                         term.quad.points[g](1), 0});
      info.points.push_back({id, static_cast<int>(g), builder.num_rows()});

      // fresh aux blocks for this quadrature point
      std::vector<int> aux_start(term.repr.aux.size());
      for (size_t j = 0; j < term.repr.aux.size(); ++j)
        aux_start[j] = builder.add_cone_vars(term.repr.aux[j].cone);

      // constraint rows: substitute X <- rows . dofs + const
      for (const auto& rb : term.repr.rows) {
        const Eigen::Index r = rb.lower.size();
        for (Eigen::Index i = 0; i < r; ++i) {
          std::vector<std::pair<int, double>> entries;
          double shift = 0.0;
          if (rb.on_input.size()) {
            for (const auto& br : rows.blocks) {
              const int base = blocks.block_start.at(br.block);
              for (size_t j = 0; j < br.cols.size(); ++j) {
                double v = rb.on_input.row(i).dot(br.coeffs.col(j));
                if (v != 0.0) entries.emplace_back(base + br.cols[j], v);
              }
            }
            shift = rb.on_input.row(i).dot(rows.constant);
          }
          for (size_t j = 0; j < rb.on_aux.size(); ++j) {
            if (!rb.on_aux[j].size()) continue;
            for (int k = 0; k < term.repr.aux[j].dim; ++k) {
              double v = rb.on_aux[j](i, k);
              if (v != 0.0) entries.emplace_back(aux_start[j] + k, v);
            }
          }
          double lo = rb.lower(i) == -kInf ? -kInf : rb.lower(i) - shift;
          double hi = rb.upper(i) == kInf ? kInf : rb.upper(i) - shift;
          builder.add_row(entries, lo, hi);
        }
      }

      // weighted cost
      if (term.repr.cost_input.size()) {
        for (const auto& br : rows.blocks) {
          const int base = blocks.block_start.at(br.block);
          for (size_t j = 0; j < br.cols.size(); ++j) {
            double v = term.repr.cost_input.dot(br.coeffs.col(j));
            if (v != 0.0) builder.add_cost(base + br.cols[j], weight * v);
          }
        }
        builder.add_cost_offset(weight *
                                term.repr.cost_input.dot(rows.constant));
      }
      if (term.repr.cost_aux.size()) {
        int at = 0;
        for (size_t j = 0; j < term.repr.aux.size(); ++j) {
          for (int k = 0; k < term.repr.aux[j].dim; ++k, ++at) {
            double v = term.repr.cost_aux(at);
            if (v != 0.0) builder.add_cost(aux_start[j] + k, weight * v);
          }
        }
      }
    }
  }
  info.aux_count = builder.num_vars() - info.aux_start;
  info.row_count = builder.num_rows() - info.first_row;
  return info;
}

}  // namespace convexfem
