#include "convexfem/fem.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace convexfem {

namespace {

const Eigen::Matrix<double, 3, 2> kBaryGrad = [] {
  Eigen::Matrix<double, 3, 2> g;
  g << -1, -1, 1, 0, 0, 1;
  return g;
}();

struct ScalarBasis {
  Eigen::VectorXd value;
  Eigen::Matrix<double, Eigen::Dynamic, 2> grad;   // physical
  Eigen::Matrix<double, Eigen::Dynamic, 3> hess;   // (H00, H11, H01) physical
};

ScalarBasis tabulate_scalar(const FunctionSpace& space, int cell,
                            const Eigen::Vector3d& bary, bool need_grad,
                            bool need_hess) {
  const TriMesh& mesh = space.mesh();
  ScalarBasis out;
  const int nb = space.local_count();
  out.value.resize(nb);
  Eigen::Matrix<double, Eigen::Dynamic, 2> gref(nb, 2);
  Eigen::Matrix<double, Eigen::Dynamic, 3> href;  // reference (H00,H11,H01)
  bool has_hess = false;

  switch (space.family()) {
    case Family::CG:
    case Family::DG:
      if (space.degree() == 0) {
        out.value(0) = 1.0;
        gref.row(0).setZero();
      } else if (space.degree() == 1) {
        for (int k = 0; k < 3; ++k) {
          out.value(k) = bary(k);
          gref.row(k) = kBaryGrad.row(k);
        }
      } else {  // degree 2
        href.resize(nb, 3);
        has_hess = true;
        for (int k = 0; k < 3; ++k) {
          out.value(k) = bary(k) * (2 * bary(k) - 1);
          gref.row(k) = (4 * bary(k) - 1) * kBaryGrad.row(k);
          Eigen::Matrix2d h =
              4.0 * kBaryGrad.row(k).transpose() * kBaryGrad.row(k);
          href.row(k) << h(0, 0), h(1, 1), h(0, 1);
        }
        for (int k = 0; k < 3; ++k) {
          int i = (k + 1) % 3, j = (k + 2) % 3;
          out.value(3 + k) = 4 * bary(i) * bary(j);
          gref.row(3 + k) =
              4 * (bary(i) * kBaryGrad.row(j) + bary(j) * kBaryGrad.row(i));
          Eigen::Matrix2d h =
              4.0 * (kBaryGrad.row(i).transpose() * kBaryGrad.row(j) +
                     kBaryGrad.row(j).transpose() * kBaryGrad.row(i));
          href.row(3 + k) << h(0, 0), h(1, 1), h(0, 1);
        }
      }
      break;
    case Family::CR:
      for (int k = 0; k < 3; ++k) {
        out.value(k) = 1 - 2 * bary(k);
        gref.row(k) = -2 * kBaryGrad.row(k);
      }
      break;
    case Family::Real:
      out.value(0) = 1.0;
      gref.row(0).setZero();
      break;
    case Family::RT:
      throw std::invalid_argument("RT space has no scalar basis");
  }

  if (need_grad || need_hess) {
    const Eigen::Matrix2d G = mesh.cell_geometry(cell).grad_transform;
    out.grad = gref * G.transpose();
    if (need_hess) {
      out.hess.resize(nb, 3);
      if (!has_hess) {
        out.hess.setZero();  // affine basis: zero second derivatives
      } else {
        for (int r = 0; r < nb; ++r) {
          Eigen::Matrix2d h;
          h << href(r, 0), href(r, 2), href(r, 2), href(r, 1);
          Eigen::Matrix2d hp = G * h * G.transpose();
          out.hess.row(r) << hp(0, 0), hp(1, 1), hp(0, 1);
        }
      }
    }
  }
  return out;
}

struct RTBasis {
  Eigen::Matrix<double, 3, 2> value;
  Eigen::Vector3d div;
};

RTBasis tabulate_rt(const FunctionSpace& space, int cell,
                    const Eigen::Vector3d& bary) {
  const TriMesh& mesh = space.mesh();
  const auto& cv = mesh.cell(cell);
  const auto& cf = mesh.cell_facets(cell);
  const double area = mesh.cell_area(cell);
  const Eigen::Vector2d centroid = mesh.cell_centroid(cell);
  Eigen::Vector2d x = bary(0) * mesh.vertex(cv[0]) +
                      bary(1) * mesh.vertex(cv[1]) + bary(2) * mesh.vertex(cv[2]);
  RTBasis out;
  for (int k = 0; k < 3; ++k) {
    const int f = cf[k];
    const Eigen::Vector2d n = mesh.facet_oriented_normal(f);
    const Eigen::Vector2d fmid =
        0.5 * (mesh.vertex(mesh.facet(f)[0]) + mesh.vertex(mesh.facet(f)[1]));
    const double sign = n.dot(fmid - centroid) > 0.0 ? 1.0 : -1.0;
    out.value.row(k) = sign * (x - mesh.vertex(cv[k])).transpose() / (2 * area);
    out.div(k) = sign / area;
  }
  return out;
}

// Barycentric coordinates in an adjacent cell of a facet point given the
// endpoint weights (w0 on the lower-index vertex).
Eigen::Vector3d facet_point_in_cell(const TriMesh& mesh, int facet, int cell,
                                    double w0, double w1) {
  const auto fv = mesh.facet(facet);
  const auto& cv = mesh.cell(cell);
  Eigen::Vector3d bary = Eigen::Vector3d::Zero();
  for (int k = 0; k < 3; ++k) {
    if (cv[k] == fv[0]) bary(k) = w0;
    if (cv[k] == fv[1]) bary(k) = w1;
  }
  return bary;
}

// Rows of a single operator applied to every (scalar dof, component) basis
// function of a space inside one cell. Columns are global block dofs.
struct OpRows {
  std::vector<int> cols;
  Eigen::MatrixXd rows;  // op_dim x cols
};

int op_output_dim(const ExprTerm& t) {
  const int vd = t.space ? t.space->value_dim() : 1;
  switch (t.op) {
    case FieldOp::Value:
    case FieldOp::Jump:
    case FieldOp::BoundaryTrace:
      return t.component >= 0 ? 1 : vd;
    case FieldOp::Grad:
      return t.component >= 0 ? 2 : 2 * vd;
    case FieldOp::Div:
    case FieldOp::Partial:
    case FieldOp::NormalGradJump:
      return 1;
    case FieldOp::SymGradVec:
    case FieldOp::HessianVec:
      return 3;
  }
  return 0;
}

OpRows cell_op_rows(const ExprTerm& term, int cell,
                    const Eigen::Vector3d& bary) {
  const FunctionSpace& space = *term.space;
  const int vd = space.value_dim();
  const int dim = op_output_dim(term);
  OpRows out;

  if (space.family() == Family::RT) {
    RTBasis rt = tabulate_rt(space, cell, bary);
    auto sdofs = space.cell_scalar_dofs(cell);
    out.cols = sdofs;
    out.rows.setZero(dim, 3);
    switch (term.op) {
      case FieldOp::Value:
        if (term.component >= 0)
          out.rows.row(0) = rt.value.col(term.component).transpose();
        else
          out.rows = rt.value.transpose();
        break;
      case FieldOp::Div:
        out.rows.row(0) = rt.div.transpose();
        break;
      default:
        throw std::invalid_argument("unsupported operator for RT space");
    }
    return out;
  }

  const bool need_grad = term.op == FieldOp::Grad || term.op == FieldOp::Div ||
                         term.op == FieldOp::SymGradVec ||
                         term.op == FieldOp::Partial;
  const bool need_hess = term.op == FieldOp::HessianVec;
  ScalarBasis basis = tabulate_scalar(space, cell, bary, need_grad, need_hess);
  auto sdofs = space.cell_scalar_dofs(cell);
  const int nb = static_cast<int>(sdofs.size());

  out.cols.resize(nb * vd);
  for (int s = 0; s < nb; ++s)
    for (int c = 0; c < vd; ++c)
      out.cols[s * vd + c] = space.global_dof(sdofs[s], c);
  out.rows.setZero(dim, nb * vd);

  auto col = [vd](int s, int c) { return s * vd + c; };
  switch (term.op) {
    case FieldOp::Value:
    case FieldOp::BoundaryTrace:
      for (int s = 0; s < nb; ++s) {
        if (term.component >= 0)
          out.rows(0, col(s, term.component)) = basis.value(s);
        else
          for (int c = 0; c < vd; ++c) out.rows(c, col(s, c)) = basis.value(s);
      }
      break;
    case FieldOp::Grad:
      for (int s = 0; s < nb; ++s) {
        if (term.component >= 0) {
          out.rows(0, col(s, term.component)) = basis.grad(s, 0);
          out.rows(1, col(s, term.component)) = basis.grad(s, 1);
        } else {
          for (int c = 0; c < vd; ++c) {
            out.rows(2 * c, col(s, c)) = basis.grad(s, 0);
            out.rows(2 * c + 1, col(s, c)) = basis.grad(s, 1);
          }
        }
      }
      break;
    case FieldOp::Div:
      if (vd != 2) throw std::invalid_argument("div needs a 2d vector field");
      for (int s = 0; s < nb; ++s) {
        out.rows(0, col(s, 0)) = basis.grad(s, 0);
        out.rows(0, col(s, 1)) = basis.grad(s, 1);
      }
      break;
    case FieldOp::SymGradVec:
      if (vd != 2)
        throw std::invalid_argument("sym_grad_vec needs a 2d vector field");
      for (int s = 0; s < nb; ++s) {
        out.rows(0, col(s, 0)) = basis.grad(s, 0);
        out.rows(1, col(s, 1)) = basis.grad(s, 1);
        out.rows(2, col(s, 0)) = basis.grad(s, 1) * M_SQRT1_2;
        out.rows(2, col(s, 1)) = basis.grad(s, 0) * M_SQRT1_2;
      }
      break;
    case FieldOp::HessianVec:
      if (vd != 1) throw std::invalid_argument("hessian_vec needs a scalar");
      for (int s = 0; s < nb; ++s) {
        out.rows(0, col(s, 0)) = basis.hess(s, 0);
        out.rows(1, col(s, 0)) = basis.hess(s, 1);
        out.rows(2, col(s, 0)) = 2 * basis.hess(s, 2);
      }
      break;
    case FieldOp::Partial: {
      int comp = term.component >= 0 ? term.component : 0;
      for (int s = 0; s < nb; ++s)
        out.rows(0, col(s, comp)) = basis.grad(s, term.dir);
      break;
    }
    default:
      throw std::invalid_argument("facet operator at a cell location");
  }
  return out;
}

bool is_facet_op(FieldOp op) {
  return op == FieldOp::Jump || op == FieldOp::NormalGradJump ||
         op == FieldOp::BoundaryTrace;
}

OpRows facet_op_rows(const ExprTerm& term, const FacetPoint& at) {
  const FunctionSpace& space = *term.space;
  const TriMesh& mesh = space.mesh();
  const int facet = at.facet;
  const auto& adj = mesh.facet_cells(facet);

  if (term.op == FieldOp::Jump || term.op == FieldOp::NormalGradJump) {
    if (adj[1] < 0)
      throw std::invalid_argument("jump operator on a boundary facet");
    ExprTerm side = term;
    side.op = term.op == FieldOp::Jump ? FieldOp::Value : FieldOp::Grad;
    OpRows plus = cell_op_rows(
        side, adj[0], facet_point_in_cell(mesh, facet, adj[0], at.w0, at.w1));
    OpRows minus = cell_op_rows(
        side, adj[1], facet_point_in_cell(mesh, facet, adj[1], at.w0, at.w1));
    if (term.op == FieldOp::NormalGradJump) {
      const Eigen::Vector2d n = mesh.facet_geometry(facet).normal;
      auto dot_n = [&](OpRows& r) {
        Eigen::MatrixXd g = n(0) * r.rows.row(0) + n(1) * r.rows.row(1);
        r.rows = g;
      };
      dot_n(plus);
      dot_n(minus);
    }
    OpRows out;
    std::map<int, int> where;
    for (int c : plus.cols) where.emplace(c, -1);
    for (int c : minus.cols) where.emplace(c, -1);
    out.cols.reserve(where.size());
    for (auto& [c, idx] : where) {
      idx = static_cast<int>(out.cols.size());
      out.cols.push_back(c);
    }
    out.rows.setZero(plus.rows.rows(), out.cols.size());
    for (size_t j = 0; j < plus.cols.size(); ++j)
      out.rows.col(where[plus.cols[j]]) += plus.rows.col(j);
    for (size_t j = 0; j < minus.cols.size(); ++j)
      out.rows.col(where[minus.cols[j]]) -= minus.rows.col(j);
    return out;
  }

  // one-sided evaluation (trace)
  int cell = adj[at.side >= 1 && adj[1] >= 0 ? 1 : 0];
  if (term.op == FieldOp::BoundaryTrace && adj[1] >= 0)
    throw std::invalid_argument("boundary trace on an interior facet");
  ExprTerm side = term;
  if (side.op == FieldOp::BoundaryTrace) side.op = FieldOp::Value;
  return cell_op_rows(side, cell,
                      facet_point_in_cell(mesh, facet, cell, at.w0, at.w1));
}

void accumulate(ExprRows& out, int block, const OpRows& op,
                const Eigen::MatrixXd& coeff,
                std::map<std::pair<int, int>, std::pair<int, int>>& index) {
  // index maps (block, col) -> (block slot, col slot)
  Eigen::MatrixXd contrib = coeff * op.rows;
  for (size_t j = 0; j < op.cols.size(); ++j) {
    auto key = std::make_pair(block, op.cols[j]);
    auto it = index.find(key);
    if (it == index.end()) {
      int slot = -1;
      for (size_t b = 0; b < out.blocks.size(); ++b)
        if (out.blocks[b].block == block) slot = static_cast<int>(b);
      if (slot < 0) {
        slot = static_cast<int>(out.blocks.size());
        out.blocks.push_back({block, {}, Eigen::MatrixXd(out.out_dim, 0)});
      }
      auto& br = out.blocks[slot];
      br.cols.push_back(op.cols[j]);
      br.coeffs.conservativeResize(Eigen::NoChange, br.cols.size());
      br.coeffs.col(br.cols.size() - 1).setZero();
      it = index.emplace(key, std::make_pair(slot, int(br.cols.size() - 1)))
               .first;
    }
    out.blocks[it->second.first].coeffs.col(it->second.second) +=
        contrib.col(j);
  }
}

template <class Location>
ExprRows eval_rows_impl(const AffineFieldExpr& expr, const Location& at) {
  ExprRows out;
  out.out_dim = expr.out_dim;
  out.constant = expr.constant.size() ? expr.constant
                                      : Eigen::VectorXd::Zero(expr.out_dim);
  std::map<std::pair<int, int>, std::pair<int, int>> index;

  for (const auto& term : expr.terms) {
    Eigen::Vector2d x;
    OpRows op;
    if (term.kind != ExprTerm::Function) {
      if constexpr (std::is_same_v<Location, CellPoint>) {
        if (is_facet_op(term.op))
          throw std::invalid_argument("facet operator at a cell location");
        op = cell_op_rows(term, at.cell, at.bary);
      } else {
        op = facet_op_rows(term, at);
      }
    }
    const TriMesh* mesh = term.space ? &term.space->mesh() : nullptr;
    if (term.kind == ExprTerm::Function || term.func) {
      // physical point needed
      if constexpr (std::is_same_v<Location, CellPoint>) {
        if (!mesh) throw std::invalid_argument("function term needs a space");
        const auto& cv = mesh->cell(at.cell);
        x = at.bary(0) * mesh->vertex(cv[0]) + at.bary(1) * mesh->vertex(cv[1]) +
            at.bary(2) * mesh->vertex(cv[2]);
      } else {
        if (!mesh) throw std::invalid_argument("function term needs a space");
        const auto fv = mesh->facet(at.facet);
        x = at.w0 * mesh->vertex(fv[0]) + at.w1 * mesh->vertex(fv[1]);
      }
    }
    switch (term.kind) {
      case ExprTerm::Block:
        accumulate(out, term.block, op, term.coeff, index);
        break;
      case ExprTerm::Field: {
        Eigen::VectorXd local(op.cols.size());
        for (size_t j = 0; j < op.cols.size(); ++j)
          local(j) = term.field_values(op.cols[j]);
        out.constant += term.coeff * (op.rows * local);
        break;
      }
      case ExprTerm::Function:
        out.constant += term.coeff * term.func(x);
        break;
    }
  }
  return out;
}

Eigen::VectorXd dof_point_values(
    const FunctionSpace& space,
    const std::function<Eigen::VectorXd(const Eigen::Vector2d&)>& fn) {
  const int vd = space.value_dim();
  Eigen::VectorXd values(space.total_dofs());
  for (int s = 0; s < space.scalar_dofs(); ++s) {
    Eigen::VectorXd v = fn(space.dof_point(s));
    if (v.size() != vd)
      throw std::invalid_argument("interpolant has wrong value dimension");
    for (int c = 0; c < vd; ++c) values(space.global_dof(s, c)) = v(c);
  }
  return values;
}

}  // namespace

Family parse_family(const std::string& name) {
  if (name == "CG") return Family::CG;
  if (name == "DG") return Family::DG;
  if (name == "CR") return Family::CR;
  if (name == "RT") return Family::RT;
  if (name == "Real" || name == "R") return Family::Real;
  throw std::invalid_argument("unknown family '" + name + "'");
}

FunctionSpace::FunctionSpace(std::shared_ptr<const TriMesh> mesh, Family family,
                             int degree, int value_dim)
    : mesh_(std::move(mesh)), family_(family), degree_(degree),
      value_dim_(value_dim) {
  if (value_dim_ < 1) throw std::invalid_argument("value_dim must be >= 1");
  const int V = mesh_->num_vertices();
  const int E = mesh_->num_cells();
  const int F = mesh_->num_facets();
  switch (family_) {
    case Family::CG:
      if (degree_ == 1)
        scalar_dofs_ = V;
      else if (degree_ == 2)
        scalar_dofs_ = V + F;
      else
        throw std::invalid_argument("CG supports degree 1 or 2");
      break;
    case Family::DG:
      if (degree_ == 0)
        scalar_dofs_ = E;
      else if (degree_ == 1)
        scalar_dofs_ = 3 * E;
      else
        throw std::invalid_argument("DG supports degree 0 or 1");
      break;
    case Family::CR:
      if (degree_ != 1) throw std::invalid_argument("CR supports degree 1");
      scalar_dofs_ = F;
      break;
    case Family::RT:
      if (degree_ != 1)
        throw std::invalid_argument("RT supports degree 1 (lowest order)");
      if (value_dim_ != 2 && value_dim_ != 1)
        throw std::invalid_argument("RT is intrinsically 2d vector valued");
      value_dim_ = 2;
      scalar_dofs_ = F;
      break;
    case Family::Real:
      if (degree_ != 0) throw std::invalid_argument("Real supports degree 0");
      if (value_dim_ != 1)
        throw std::invalid_argument("Real space is scalar");
      scalar_dofs_ = 1;
      break;
  }
  total_dofs_ =
      family_ == Family::RT ? scalar_dofs_ : scalar_dofs_ * value_dim_;
}

int FunctionSpace::local_count() const {
  switch (family_) {
    case Family::CG:
      return degree_ == 1 ? 3 : 6;
    case Family::DG:
      return degree_ == 0 ? 1 : 3;
    case Family::CR:
    case Family::RT:
      return 3;
    case Family::Real:
      return 1;
  }
  return 0;
}

std::vector<int> FunctionSpace::cell_scalar_dofs(int c) const {
  const auto& cell = mesh_->cell(c);
  const auto& cf = mesh_->cell_facets(c);
  switch (family_) {
    case Family::CG:
      if (degree_ == 1) return {cell[0], cell[1], cell[2]};
      return {cell[0], cell[1], cell[2], mesh_->num_vertices() + cf[0],
              mesh_->num_vertices() + cf[1], mesh_->num_vertices() + cf[2]};
    case Family::DG:
      if (degree_ == 0) return {c};
      return {3 * c, 3 * c + 1, 3 * c + 2};
    case Family::CR:
    case Family::RT:
      return {cf[0], cf[1], cf[2]};
    case Family::Real:
      return {0};
  }
  return {};
}

std::vector<int> FunctionSpace::facet_scalar_dofs(int f) const {
  const auto fv = mesh_->facet(f);
  switch (family_) {
    case Family::CG:
      if (degree_ == 1) return {fv[0], fv[1]};
      return {fv[0], fv[1], mesh_->num_vertices() + f};
    case Family::CR:
    case Family::RT:
      return {f};
    case Family::DG:
    case Family::Real:
      return {};
  }
  return {};
}

Eigen::Vector2d FunctionSpace::dof_point(int s) const {
  switch (family_) {
    case Family::CG:
      if (s < mesh_->num_vertices()) return mesh_->vertex(s);
      {
        const auto fv = mesh_->facet(s - mesh_->num_vertices());
        return 0.5 * (mesh_->vertex(fv[0]) + mesh_->vertex(fv[1]));
      }
    case Family::DG:
      if (degree_ == 0) return mesh_->cell_centroid(s);
      return mesh_->vertex(mesh_->cell(s / 3)[s % 3]);
    case Family::CR: {
      const auto fv = mesh_->facet(s);
      return 0.5 * (mesh_->vertex(fv[0]) + mesh_->vertex(fv[1]));
    }
    case Family::RT:
    case Family::Real:
      throw std::invalid_argument("space has no interpolation points");
  }
  return {};
}

SpacePtr function_space(std::shared_ptr<const TriMesh> mesh, Family family,
                        int degree, int value_dim) {
  return std::make_shared<FunctionSpace>(std::move(mesh), family, degree,
                                         value_dim);
}

Eigen::VectorXd DiscreteField::eval(int c, const Eigen::Vector3d& bary) const {
  ExprTerm t;
  t.kind = ExprTerm::Field;
  t.space = space;
  t.field_values = values;
  t.coeff = Eigen::MatrixXd::Identity(op_output_dim(t), op_output_dim(t));
  OpRows rows = cell_op_rows(t, c, bary);
  Eigen::VectorXd local(rows.cols.size());
  for (size_t j = 0; j < rows.cols.size(); ++j) local(j) = values(rows.cols[j]);
  return rows.rows * local;
}

DiscreteField interpolate(
    const SpacePtr& space,
    const std::function<Eigen::VectorXd(const Eigen::Vector2d&)>& fn) {
  if (!space->is_lagrange())
    throw std::invalid_argument("interpolate supports CG/DG/CR spaces only");
  return {space, dof_point_values(*space, fn)};
}

DiscreteField interpolate_scalar(
    const SpacePtr& space, const std::function<double(const Eigen::Vector2d&)>& fn) {
  if (space->value_dim() != 1)
    throw std::invalid_argument("interpolate_scalar needs a scalar space");
  return interpolate(space, [&fn](const Eigen::Vector2d& x) {
    return Eigen::VectorXd::Constant(1, fn(x));
  });
}

QuadRule quadrature_rule(const QuadSpec& spec, QuadRule::Domain domain) {
  QuadRule rule;
  rule.domain = domain;
  auto add = [&rule](double a, double b, double c, double w) {
    rule.points.emplace_back(a, b, c);
    rule.weights.push_back(w);
  };
  if (domain == QuadRule::Cell) {
    switch (spec.kind) {
      case QuadSpec::Centroid:
        add(1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0);
        break;
      case QuadSpec::Vertex:
        add(1, 0, 0, 1.0 / 3);
        add(0, 1, 0, 1.0 / 3);
        add(0, 0, 1, 1.0 / 3);
        break;
      case QuadSpec::Gauss:
        if (spec.degree <= 1) {
          add(1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0);
        } else if (spec.degree == 2) {
          add(2.0 / 3, 1.0 / 6, 1.0 / 6, 1.0 / 3);
          add(1.0 / 6, 2.0 / 3, 1.0 / 6, 1.0 / 3);
          add(1.0 / 6, 1.0 / 6, 2.0 / 3, 1.0 / 3);
        } else if (spec.degree <= 4) {
          const double a1 = 0.445948490915965;
          const double w1 = 0.223381589678011;
          const double a2 = 0.091576213509771;
          const double w2 = 0.109951743655322;
          add(1 - 2 * a1, a1, a1, w1);
          add(a1, 1 - 2 * a1, a1, w1);
          add(a1, a1, 1 - 2 * a1, w1);
          add(1 - 2 * a2, a2, a2, w2);
          add(a2, 1 - 2 * a2, a2, w2);
          add(a2, a2, 1 - 2 * a2, w2);
        } else {
          throw std::invalid_argument("gauss degree must be <= 4");
        }
        break;
    }
  } else {
    switch (spec.kind) {
      case QuadSpec::Centroid:
        add(0.5, 0.5, 0, 1.0);
        break;
      case QuadSpec::Vertex:
        add(1, 0, 0, 0.5);
        add(0, 1, 0, 0.5);
        break;
      case QuadSpec::Gauss:
        if (spec.degree <= 1) {
          add(0.5, 0.5, 0, 1.0);
        } else if (spec.degree <= 3) {
          const double d = 0.5 / std::sqrt(3.0);
          add(0.5 + d, 0.5 - d, 0, 0.5);
          add(0.5 - d, 0.5 + d, 0, 0.5);
        } else if (spec.degree <= 4) {
          const double d = 0.5 * std::sqrt(3.0 / 5.0);
          add(0.5 + d, 0.5 - d, 0, 5.0 / 18);
          add(0.5, 0.5, 0, 8.0 / 18);
          add(0.5 - d, 0.5 + d, 0, 5.0 / 18);
        } else {
          throw std::invalid_argument("gauss degree must be <= 4");
        }
        break;
    }
  }
  return rule;
}

bool AffineFieldExpr::has_facet_ops() const {
  return std::any_of(terms.begin(), terms.end(),
                     [](const ExprTerm& t) { return is_facet_op(t.op); });
}

int AffineFieldExpr::single_block() const {
  int block = -1;
  for (const auto& t : terms) {
    if (t.kind != ExprTerm::Block) continue;
    if (block >= 0 && t.block != block)
      throw std::invalid_argument("expression references several blocks");
    block = t.block;
  }
  return block;
}

namespace {
AffineFieldExpr make_op_expr(int block, SpacePtr space, FieldOp op,
                             int comp = -1, int dir = -1) {
  ExprTerm t;
  t.kind = ExprTerm::Block;
  t.op = op;
  t.component = comp;
  t.dir = dir;
  t.block = block;
  t.space = std::move(space);
  const int d = op_output_dim(t);
  t.coeff = Eigen::MatrixXd::Identity(d, d);
  AffineFieldExpr e;
  e.out_dim = d;
  e.terms.push_back(std::move(t));
  return e;
}
}  // namespace

AffineFieldExpr value_of(int block, SpacePtr space) {
  return make_op_expr(block, std::move(space), FieldOp::Value);
}
AffineFieldExpr component_of(int block, SpacePtr space, int comp) {
  return make_op_expr(block, std::move(space), FieldOp::Value, comp);
}
AffineFieldExpr grad_of(int block, SpacePtr space, int comp) {
  return make_op_expr(block, std::move(space), FieldOp::Grad, comp);
}
AffineFieldExpr div_of(int block, SpacePtr space) {
  return make_op_expr(block, std::move(space), FieldOp::Div);
}
AffineFieldExpr sym_grad_vec_of(int block, SpacePtr space) {
  return make_op_expr(block, std::move(space), FieldOp::SymGradVec);
}
AffineFieldExpr hessian_vec_of(int block, SpacePtr space) {
  return make_op_expr(block, std::move(space), FieldOp::HessianVec);
}
AffineFieldExpr partial_of(int block, SpacePtr space, int comp, int dir) {
  return make_op_expr(block, std::move(space), FieldOp::Partial, comp, dir);
}
AffineFieldExpr jump_of(int block, SpacePtr space, int comp) {
  return make_op_expr(block, std::move(space), FieldOp::Jump, comp);
}
AffineFieldExpr normal_grad_jump_of(int block, SpacePtr space) {
  return make_op_expr(block, std::move(space), FieldOp::NormalGradJump);
}
AffineFieldExpr boundary_trace_of(int block, SpacePtr space, int comp) {
  return make_op_expr(block, std::move(space), FieldOp::BoundaryTrace, comp);
}

AffineFieldExpr field_value_of(const DiscreteField& field) {
  ExprTerm t;
  t.kind = ExprTerm::Field;
  t.op = FieldOp::Value;
  t.space = field.space;
  t.field_values = field.values;
  const int d = op_output_dim(t);
  t.coeff = Eigen::MatrixXd::Identity(d, d);
  AffineFieldExpr e;
  e.out_dim = d;
  e.terms.push_back(std::move(t));
  return e;
}

AffineFieldExpr function_expr(
    int dim, std::function<Eigen::VectorXd(const Eigen::Vector2d&)> fn) {
  ExprTerm t;
  t.kind = ExprTerm::Function;
  t.coeff = Eigen::MatrixXd::Identity(dim, dim);
  t.func = std::move(fn);
  AffineFieldExpr e;
  e.out_dim = dim;
  e.terms.push_back(std::move(t));
  return e;
}

AffineFieldExpr operator*(const Eigen::MatrixXd& C, const AffineFieldExpr& e) {
  if (C.cols() != e.out_dim)
    throw std::invalid_argument("coefficient shape mismatch");
  AffineFieldExpr out = e;
  out.out_dim = static_cast<int>(C.rows());
  for (auto& t : out.terms) t.coeff = C * t.coeff;
  if (out.constant.size()) out.constant = C * out.constant;
  return out;
}

AffineFieldExpr operator*(double a, const AffineFieldExpr& e) {
  AffineFieldExpr out = e;
  for (auto& t : out.terms) t.coeff *= a;
  if (out.constant.size()) out.constant *= a;
  return out;
}

AffineFieldExpr operator+(const AffineFieldExpr& a, const AffineFieldExpr& b) {
  if (a.out_dim != b.out_dim)
    throw std::invalid_argument("expression dimension mismatch");
  AffineFieldExpr out = a;
  out.terms.insert(out.terms.end(), b.terms.begin(), b.terms.end());
  if (b.constant.size()) {
    if (!out.constant.size()) out.constant = Eigen::VectorXd::Zero(out.out_dim);
    out.constant += b.constant;
  }
  return out;
}

AffineFieldExpr operator-(const AffineFieldExpr& a, const AffineFieldExpr& b) {
  return a + (-1.0 * b);
}

AffineFieldExpr operator+(const AffineFieldExpr& a, const Eigen::VectorXd& c) {
  if (c.size() != a.out_dim)
    throw std::invalid_argument("constant dimension mismatch");
  AffineFieldExpr out = a;
  if (!out.constant.size()) out.constant = Eigen::VectorXd::Zero(out.out_dim);
  out.constant += c;
  return out;
}

ExprRows eval_expr_rows(const AffineFieldExpr& expr, const CellPoint& at) {
  return eval_rows_impl(expr, at);
}

ExprRows eval_expr_rows(const AffineFieldExpr& expr, const FacetPoint& at) {
  return eval_rows_impl(expr, at);
}

std::vector<int> measure_entities(const TriMesh& mesh, const Measure& measure) {
  switch (measure.kind) {
    case Measure::Cells: {
      std::vector<int> ids(mesh.num_cells());
      for (int i = 0; i < mesh.num_cells(); ++i) ids[i] = i;
      return ids;
    }
    case Measure::InteriorFacets:
      return mesh.interior_facets();
    case Measure::Boundary: {
      std::vector<int> ids;
      for (int f : mesh.boundary_facets())
        if (measure.region == 0 || mesh.boundary_marker(f) == measure.region)
          ids.push_back(f);
      return ids;
    }
  }
  return {};
}

double entity_measure(const TriMesh& mesh, const Measure& measure, int id) {
  return measure.kind == Measure::Cells ? mesh.cell_area(id)
                                        : mesh.facet_geometry(id).length;
}

Eigen::Vector2d entity_point(const TriMesh& mesh, const Measure& measure,
                             int id, const Eigen::Vector3d& bary) {
  if (measure.kind == Measure::Cells) {
    const auto& cv = mesh.cell(id);
    return bary(0) * mesh.vertex(cv[0]) + bary(1) * mesh.vertex(cv[1]) +
           bary(2) * mesh.vertex(cv[2]);
  }
  const auto fv = mesh.facet(id);
  return bary(0) * mesh.vertex(fv[0]) + bary(1) * mesh.vertex(fv[1]);
}

WeakBlock assemble_weak_block(const SpacePtr& mult_space,
                              const AffineFieldExpr& expr,
                              const Measure& measure, const QuadRule& quad) {
  const TriMesh& mesh = mult_space->mesh();
  if (mult_space->family() == Family::RT)
    throw std::invalid_argument("RT multiplier spaces are not supported");
  if (mult_space->value_dim() != expr.out_dim)
    throw std::invalid_argument(
        "multiplier value dimension does not match the expression");
  const bool on_cells = measure.kind == Measure::Cells;
  if ((quad.domain == QuadRule::Cell) != on_cells)
    throw std::invalid_argument("quadrature domain does not match measure");

  int block_cols = 0;
  for (const auto& t : expr.terms)
    if (t.kind == ExprTerm::Block) block_cols = t.space->total_dofs();
  expr.single_block();  // validates single-block usage

  const int vd = mult_space->value_dim();
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(mult_space->total_dofs());

  for (int id : measure_entities(mesh, measure)) {
    const double size = entity_measure(mesh, measure, id);
    for (size_t g = 0; g < quad.points.size(); ++g) {
      const double w = quad.weights[g] * size;
      ExprRows rows;
      std::vector<int> mult_sdofs;
      Eigen::VectorXd mult_vals;
      if (on_cells) {
        CellPoint at{id, quad.points[g]};
        rows = eval_expr_rows(expr, at);
        ScalarBasis sb = tabulate_scalar(*mult_space, id, quad.points[g], false,
                                         false);
        mult_vals = sb.value;
        mult_sdofs.clear();
        for (int s : mult_space->cell_scalar_dofs(id)) mult_sdofs.push_back(s);
      } else {
        FacetPoint at{id, quad.points[g](0), quad.points[g](1), 0};
        rows = eval_expr_rows(expr, at);
        int cell = mesh.facet_cells(id)[0];
        Eigen::Vector3d bary = facet_point_in_cell(
            mesh, id, cell, quad.points[g](0), quad.points[g](1));
        ScalarBasis sb = tabulate_scalar(*mult_space, cell, bary, false, false);
        mult_vals = sb.value;
        mult_sdofs.clear();
        for (int s : mult_space->cell_scalar_dofs(cell)) mult_sdofs.push_back(s);
      }
      for (size_t i = 0; i < mult_sdofs.size(); ++i) {
        for (int c = 0; c < vd; ++c) {
          const int row = mult_space->global_dof(mult_sdofs[i], c);
          const double psi = w * mult_vals(i);
          if (psi == 0.0) continue;
          for (const auto& br : rows.blocks)
            for (size_t j = 0; j < br.cols.size(); ++j)
              if (br.coeffs(c, j) != 0.0)
                triplets.emplace_back(row, br.cols[j], psi * br.coeffs(c, j));
          rhs(row) += psi * rows.constant(c);
        }
      }
    }
  }
  WeakBlock out;
  out.matrix.resize(mult_space->total_dofs(), block_cols);
  out.matrix.setFromTriplets(triplets.begin(), triplets.end());
  out.rhs = std::move(rhs);
  return out;
}

}  // namespace convexfem
