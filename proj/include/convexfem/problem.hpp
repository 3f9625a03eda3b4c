#ifndef CONVEXFEM_PROBLEM_HPP
#define CONVEXFEM_PROBLEM_HPP

#include <optional>
#include <string>
#include <vector>

#include "convexfem/conic.hpp"
#include "convexfem/funclib.hpp"
#include "convexfem/ipm.hpp"

namespace convexfem {

struct DirichletBC {
  int region = 0;      // boundary region id, 0 = every boundary facet
  int component = -1;  // -1 = all components
  std::function<double(const Eigen::Vector2d&)> value;

  static DirichletBC constant(int region, double v, int component = -1) {
    return {region, component, [v](const Eigen::Vector2d&) { return v; }};
  }
};

struct VarBound {
  enum Kind { None, Scalar, Field } kind = None;
  double scalar = 0.0;
  Eigen::VectorXd field;

  VarBound() = default;
  VarBound(double v) : kind(Scalar), scalar(v) {}                 // NOLINT
  VarBound(const DiscreteField& f) : kind(Field), field(f.values) {}  // NOLINT
};

struct SolutionBundle {
  SolveStatus status = SolveStatus::MaxIter;
  double objective = 0.0;
  double gap = 0.0;
  double primal_res = 0.0, dual_res = 0.0;
  int iterations = 0;
  std::vector<DiscreteField> fields;       // one per variable block
  std::vector<DiscreteField> multipliers;  // one per constraint block
  IpmResult raw;
};

/// Block-structured convex problem: ordered variable blocks over function
/// spaces, weak equality/inequality constraints with multiplier spaces,
/// linear objective forms and conic-representable convex terms.
class BlockProblem {
 public:
  explicit BlockProblem(std::string name = "", bool maximize = false)
      : name_(std::move(name)), maximize_(maximize) {}

  struct VarOpts {
    VarBound lower, upper;
    std::optional<Cone> cone;  // applied pointwise per dof group
    std::vector<DirichletBC> dirichlet;
  };

  int add_var(SpacePtr space, VarOpts opts = {});

  struct Rhs {
    enum Kind { Zero, Scalar, Range, Form } kind = Zero;
    double lower = 0.0, upper = 0.0;
    std::optional<AffineFieldExpr> form;  // assembled against the multiplier

    static Rhs zero() { return {}; }
    static Rhs equal(double b) { return {Scalar, b, b, {}}; }
    static Rhs range(double bl, double bu) { return {Range, bl, bu, {}}; }
    static Rhs of_form(AffineFieldExpr f) {
      return {Form, 0.0, 0.0, std::move(f)};
    }
  };

  /// Each expression references a single previously declared block (or only
  /// fixed fields). Rows are assembled against the multiplier space and the
  /// per-expression contributions summed.
  int add_eq_constraint(SpacePtr mult_space, std::vector<AffineFieldExpr> exprs,
                        Rhs rhs, const Measure& measure, const QuadRule& quad);
  int add_ineq_constraint(SpacePtr mult_space,
                          std::vector<AffineFieldExpr> exprs, double lower,
                          double upper, const Measure& measure,
                          const QuadRule& quad);

  void add_obj_coeffs(int block, const Eigen::VectorXd& coeffs);
  /// Adds the assembled linear form of f against the block's basis (the
  /// integral of f . u over the mesh) to the objective.
  void add_obj_form(int block,
                    std::function<Eigen::VectorXd(const Eigen::Vector2d&)> f,
                    const QuadRule& quad);

  int add_convex_term(ConvexTermInstance term);

  /// Replaces the fixed-field values inside a convex term's expression and
  /// patches the affected row bounds of the cached program (the quadratic
  /// shift fast path). Only valid after assemble().
  void rebind_term_field(int term_id, const Eigen::VectorXd& new_values);

  const StandardConicProgram& assemble();
  SolutionBundle optimize(const IpmSettings& settings = {});

  int num_blocks() const { return static_cast<int>(vars_.size()); }
  const SpacePtr& block_space(int b) const { return vars_[b].space; }
  int block_start(int b) const { return layout_.block_start[b]; }
  const std::string& name() const { return name_; }

 private:
  struct VarBlock {
    SpacePtr space;
    VarOpts opts;
  };
  struct ConstraintBlock {
    SpacePtr mult_space;
    std::vector<AffineFieldExpr> exprs;
    Rhs rhs;
    bool equality;
    double lower, upper;
    Measure measure;
    QuadRule quad;
    int first_row = 0;  // set by assemble
  };
  struct TermSlot {
    ConvexTermInstance term;
    ExpansionInfo info;
  };

  void build();

  std::string name_;
  bool maximize_;
  std::vector<VarBlock> vars_;
  std::vector<ConstraintBlock> constraints_;
  std::vector<TermSlot> terms_;
  std::vector<std::pair<int, Eigen::VectorXd>> objective_;
  BlockIndexMap layout_;
  std::optional<StandardConicProgram> program_;
};

/// Scalar dofs of a space lying on a boundary region (0 = all boundary).
std::vector<int> boundary_scalar_dofs(const FunctionSpace& space, int region);

}  // namespace convexfem

#endif
