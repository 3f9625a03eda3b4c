#include "convexfem/problem.hpp"

#include <algorithm>

namespace convexfem {

std::vector<int> boundary_scalar_dofs(const FunctionSpace& space, int region) {
  std::vector<int> dofs;
  for (int f : space.mesh().boundary_facets()) {
    if (region != 0 && space.mesh().boundary_marker(f) != region) continue;
    for (int s : space.facet_scalar_dofs(f)) dofs.push_back(s);
  }
  std::sort(dofs.begin(), dofs.end());
  dofs.erase(std::unique(dofs.begin(), dofs.end()), dofs.end());
  return dofs;
}

int BlockProblem::add_var(SpacePtr space, VarOpts opts) {
  if (opts.cone) {
    const bool grouped = space->value_dim() > 1
                             ? opts.cone->dim == space->value_dim()
                             : opts.cone->dim > 0 &&
                                   space->total_dofs() % opts.cone->dim == 0;
    if (!grouped)
      throw std::invalid_argument(
          "pointwise cone dimension does not match the dof grouping");
  }
  auto check_bound = [&](const VarBound& vb) {
    if (vb.kind == VarBound::Field && vb.field.size() != space->total_dofs())
      throw std::invalid_argument("bound field does not match the space");
  };
  check_bound(opts.lower);
  check_bound(opts.upper);
  if (!opts.dirichlet.empty() &&
      (space->family() == Family::RT || space->family() == Family::Real ||
       space->family() == Family::DG))
    throw std::invalid_argument(
        "Dirichlet conditions need a space with boundary dofs (CG or CR)");
  vars_.push_back({std::move(space), std::move(opts)});
  program_.reset();
  return static_cast<int>(vars_.size()) - 1;
}

int BlockProblem::add_eq_constraint(SpacePtr mult_space,
                                    std::vector<AffineFieldExpr> exprs, Rhs rhs,
                                    const Measure& measure,
                                    const QuadRule& quad) {
  for (const auto& e : exprs) {
    int b = e.single_block();
    if (b >= static_cast<int>(vars_.size()))
      throw std::logic_error("constraint references an undeclared block");
  }
  constraints_.push_back({std::move(mult_space), std::move(exprs),
                          std::move(rhs), true, 0.0, 0.0, measure, quad, 0});
  program_.reset();
  return static_cast<int>(constraints_.size()) - 1;
}

int BlockProblem::add_ineq_constraint(SpacePtr mult_space,
                                      std::vector<AffineFieldExpr> exprs,
                                      double lower, double upper,
                                      const Measure& measure,
                                      const QuadRule& quad) {
  for (const auto& e : exprs) {
    int b = e.single_block();
    if (b >= static_cast<int>(vars_.size()))
      throw std::logic_error("constraint references an undeclared block");
  }
  constraints_.push_back({std::move(mult_space), std::move(exprs), Rhs{}, false,
                          lower, upper, measure, quad, 0});
  program_.reset();
  return static_cast<int>(constraints_.size()) - 1;
}

void BlockProblem::add_obj_coeffs(int block, const Eigen::VectorXd& coeffs) {
  if (coeffs.size() != vars_.at(block).space->total_dofs())
    throw std::invalid_argument("objective coefficient size mismatch");
  objective_.emplace_back(block, coeffs);
  program_.reset();
}

void BlockProblem::add_obj_form(
    int block, std::function<Eigen::VectorXd(const Eigen::Vector2d&)> f,
    const QuadRule& quad) {
  const auto& space = vars_.at(block).space;
  AffineFieldExpr fe = function_expr(space->value_dim(), std::move(f));
  // attach the mesh for point lookup
  fe.terms[0].space = space;
  WeakBlock wb = assemble_weak_block(space, fe, Measure::cells(), quad);
  objective_.emplace_back(block, wb.rhs);
  program_.reset();
}

int BlockProblem::add_convex_term(ConvexTermInstance term) {
  if (term.scale == 0.0) return -1;  // dropped, zero weight contributes nothing
  if (term.scale < 0.0)
    throw std::invalid_argument("convex term scale must be positive");
  if (term.repr.input_dim != term.input.out_dim)
    throw std::invalid_argument("term input dimension mismatch");
  int b = term.input.single_block();
  if (b >= static_cast<int>(vars_.size()))
    throw std::logic_error("convex term references an undeclared block");
  terms_.push_back({std::move(term), {}});
  program_.reset();
  return static_cast<int>(terms_.size()) - 1;
}

void BlockProblem::build() {
  if (vars_.empty()) throw std::logic_error("problem has no variable blocks");
  ProgramBuilder builder;
  builder.set_maximize(maximize_);
  layout_.block_start.clear();

  // variable blocks (pointwise cones declared per dof group)
  for (const auto& var : vars_) {
    const int total = var.space->total_dofs();
    int start;
    if (var.opts.cone) {
      start = -1;
      for (int g = 0; g < total / var.opts.cone->dim; ++g) {
        int s = builder.add_cone_vars(*var.opts.cone);
        if (start < 0) start = s;
      }
    } else {
      start = builder.add_vars(total);
    }
    layout_.block_start.push_back(start);
  }

  // bounds and Dirichlet conditions
  for (size_t bidx = 0; bidx < vars_.size(); ++bidx) {
    const auto& var = vars_[bidx];
    const int start = layout_.block_start[bidx];
    const int total = var.space->total_dofs();
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(total, -kInf);
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(total, kInf);
    if (var.opts.lower.kind == VarBound::Scalar)
      lo.setConstant(var.opts.lower.scalar);
    else if (var.opts.lower.kind == VarBound::Field)
      lo = var.opts.lower.field;
    if (var.opts.upper.kind == VarBound::Scalar)
      hi.setConstant(var.opts.upper.scalar);
    else if (var.opts.upper.kind == VarBound::Field)
      hi = var.opts.upper.field;
    for (const auto& bc : var.opts.dirichlet) {
      for (int s : boundary_scalar_dofs(*var.space, bc.region)) {
        const Eigen::Vector2d x = var.space->dof_point(s);
        const double v = bc.value(x);
        for (int c = 0; c < var.space->value_dim(); ++c) {
          if (bc.component >= 0 && c != bc.component) continue;
          lo(var.space->global_dof(s, c)) = v;
          hi(var.space->global_dof(s, c)) = v;
        }
      }
    }
    for (int i = 0; i < total; ++i)
      if (lo(i) != -kInf || hi(i) != kInf)
        builder.set_var_bounds(start + i, lo(i), hi(i));
  }

  // weak constraint blocks
  for (auto& con : constraints_) {
    con.first_row = builder.num_rows();
    const int rows = con.mult_space->total_dofs();
    std::vector<std::vector<std::pair<int, double>>> entries(rows);
    Eigen::VectorXd shift = Eigen::VectorXd::Zero(rows);
    for (const auto& expr : con.exprs) {
      WeakBlock wb =
          assemble_weak_block(con.mult_space, expr, con.measure, con.quad);
      shift += wb.rhs;
      const int block = expr.single_block();
      if (block >= 0) {
        const int base = layout_.block_start[block];
        for (int k = 0; k < wb.matrix.outerSize(); ++k)
          for (Eigen::SparseMatrix<double>::InnerIterator it(wb.matrix, k); it;
               ++it)
            entries[it.row()].emplace_back(base + it.col(), it.value());
      }
    }
    Eigen::VectorXd bl(rows), bu(rows);
    if (con.equality) {
      switch (con.rhs.kind) {
        case Rhs::Zero:
          bl.setZero();
          bu.setZero();
          break;
        case Rhs::Scalar:
        case Rhs::Range:
          bl.setConstant(con.rhs.lower);
          bu.setConstant(con.rhs.upper);
          break;
        case Rhs::Form: {
          WeakBlock wb = assemble_weak_block(con.mult_space, *con.rhs.form,
                                             con.measure, con.quad);
          bl = wb.rhs;
          bu = wb.rhs;
          break;
        }
      }
    } else {
      bl.setConstant(con.lower);
      bu.setConstant(con.upper);
    }
    for (int r = 0; r < rows; ++r) {
      double lo = bl(r) == -kInf ? -kInf : bl(r) - shift(r);
      double hi = bu(r) == kInf ? kInf : bu(r) - shift(r);
      builder.add_row(entries[r], lo, hi);
    }
  }

  // convex terms
  for (auto& slot : terms_)
    slot.info = expand_term(slot.term, builder, layout_);

  // objective
  for (const auto& [block, coeffs] : objective_) {
    const int base = layout_.block_start[block];
    for (int i = 0; i < coeffs.size(); ++i)
      if (coeffs(i) != 0.0) builder.add_cost(base + i, coeffs(i));
  }

  program_ = builder.build();
}

const StandardConicProgram& BlockProblem::assemble() {
  if (!program_) build();
  return *program_;
}

void BlockProblem::rebind_term_field(int term_id,
                                     const Eigen::VectorXd& new_values) {
  if (!program_) throw std::logic_error("rebind requires an assembled problem");
  auto& slot = terms_.at(term_id);
  bool found = false;
  for (auto& t : slot.term.input.terms) {
    if (t.kind != ExprTerm::Field) continue;
    if (t.field_values.size() != new_values.size())
      throw std::invalid_argument("rebind field size mismatch");
    t.field_values = new_values;
    found = true;
  }
  if (!found)
    throw std::invalid_argument("term has no fixed field to rebind");

  // Recompute the constant-dependent row bounds, mirroring expand_term's
  // emission order.
  const auto& term = slot.term;
  const bool on_cells = term.measure.kind == Measure::Cells;
  const TriMesh* mesh = nullptr;
  for (const auto& t : term.input.terms)
    if (t.space) mesh = &t.space->mesh();
  auto& prog = *program_;
  size_t point_idx = 0;
  for (int id : measure_entities(*mesh, term.measure)) {
    for (size_t g = 0; g < term.quad.points.size(); ++g, ++point_idx) {
      const auto& pr = slot.info.points[point_idx];
      ExprRows rows;
      if (on_cells)
        rows = eval_expr_rows(term.input, CellPoint{id, term.quad.points[g]});
      else
        rows = eval_expr_rows(
            term.input,
            FacetPoint{id, term.quad.points[g](0), term.quad.points[g](1), 0});
      int row = pr.row_start;
      for (const auto& rb : term.repr.rows) {
        for (Eigen::Index i = 0; i < rb.lower.size(); ++i, ++row) {
          double shift =
              rb.on_input.size() ? rb.on_input.row(i).dot(rows.constant) : 0.0;
          prog.row_lower(row) =
              rb.lower(i) == -kInf ? -kInf : rb.lower(i) - shift;
          prog.row_upper(row) =
              rb.upper(i) == kInf ? kInf : rb.upper(i) - shift;
        }
      }
    }
  }
}

SolutionBundle BlockProblem::optimize(const IpmSettings& settings) {
  const StandardConicProgram& prog = assemble();
  IpmResult res = solve(prog, settings);

  SolutionBundle out;
  out.status = res.status;
  out.objective = res.objective;
  out.gap = res.gap;
  out.primal_res = res.primal_res;
  out.dual_res = res.dual_res;
  out.iterations = res.iterations;
  for (size_t b = 0; b < vars_.size(); ++b) {
    const auto& space = vars_[b].space;
    DiscreteField f{space, res.x.segment(layout_.block_start[b],
                                         space->total_dofs())};
    out.fields.push_back(std::move(f));
  }
  for (const auto& con : constraints_) {
    DiscreteField f{con.mult_space,
                    res.duals.rows.segment(con.first_row,
                                           con.mult_space->total_dofs())};
    out.multipliers.push_back(std::move(f));
  }
  out.raw = std::move(res);
  return out;
}

}  // namespace convexfem
