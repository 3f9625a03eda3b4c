#ifndef CONVEXFEM_FEM_HPP
#define CONVEXFEM_FEM_HPP

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "convexfem/mesh.hpp"

namespace convexfem {

enum class Family { CG, DG, CR, RT, Real };

Family parse_family(const std::string& name);

/// Discrete function space on a TriMesh. Scalar dofs are numbered from mesh
/// entities (vertices, facets, cells) so the numbering is deterministic;
/// vector-valued spaces interleave components (dof = scalar * value_dim + c).
/// RT is intrinsically vector valued with one dof per facet.
class FunctionSpace {
 public:
  FunctionSpace(std::shared_ptr<const TriMesh> mesh, Family family, int degree,
                int value_dim = 1);

  const TriMesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const TriMesh>& mesh_ptr() const { return mesh_; }
  Family family() const { return family_; }
  int degree() const { return degree_; }
  int value_dim() const { return value_dim_; }

  int scalar_dofs() const { return scalar_dofs_; }
  int total_dofs() const { return total_dofs_; }

  /// Number of scalar basis functions per cell.
  int local_count() const;
  /// Global scalar dof ids of cell c, in local basis order.
  std::vector<int> cell_scalar_dofs(int c) const;
  int global_dof(int scalar_dof, int comp) const {
    return family_ == Family::RT ? scalar_dof : scalar_dof * value_dim_ + comp;
  }

  /// Scalar dofs attached to facet f (CG vertices/midpoint, CR/RT facet dof).
  std::vector<int> facet_scalar_dofs(int f) const;
  /// Physical location of a scalar dof (Lagrange-type spaces only).
  Eigen::Vector2d dof_point(int scalar_dof) const;

  bool is_lagrange() const {
    return family_ == Family::CG || family_ == Family::DG ||
           family_ == Family::CR;
  }

 private:
  std::shared_ptr<const TriMesh> mesh_;
  Family family_;
  int degree_;
  int value_dim_;
  int scalar_dofs_;
  int total_dofs_;
};

using SpacePtr = std::shared_ptr<const FunctionSpace>;

SpacePtr function_space(std::shared_ptr<const TriMesh> mesh, Family family,
                        int degree, int value_dim = 1);

struct DiscreteField {
  SpacePtr space;
  Eigen::VectorXd values;

  /// Field value at a point of cell c (barycentric coordinates).
  Eigen::VectorXd eval(int c, const Eigen::Vector3d& bary) const;
};

DiscreteField interpolate(
    const SpacePtr& space,
    const std::function<Eigen::VectorXd(const Eigen::Vector2d&)>& fn);
DiscreteField interpolate_scalar(const SpacePtr& space,
                                 const std::function<double(const Eigen::Vector2d&)>& fn);

// ---------------------------------------------------------------------------
// Quadrature

struct QuadSpec {
  enum Kind { Centroid, Vertex, Gauss } kind = Centroid;
  int degree = 1;  // Gauss only

  static QuadSpec centroid() { return {Centroid, 1}; }
  static QuadSpec vertex() { return {Vertex, 1}; }
  static QuadSpec gauss(int d) { return {Gauss, d}; }
};

struct QuadRule {
  enum Domain { Cell, Facet } domain = Cell;
  /// Cell rules: barycentric coordinates. Facet rules: weights of the two
  /// (sorted) facet endpoints in the first two entries, third entry zero.
  std::vector<Eigen::Vector3d> points;
  /// Fractions of the entity measure; they sum to 1.
  std::vector<double> weights;
};

QuadRule quadrature_rule(const QuadSpec& spec, QuadRule::Domain domain);

// ---------------------------------------------------------------------------
// Field expressions

enum class FieldOp {
  Value,
  Grad,
  Div,
  SymGradVec,      // strain of a 2d vector field as (E00, E11, sqrt(2) E01)
  HessianVec,      // (H00, H11, 2 H01)
  Partial,         // d(component)/d(x_dir)
  Jump,            // u+ - u- across an interior facet
  NormalGradJump,  // (grad u+ - grad u-) . n, n out of the first cell
  BoundaryTrace,
};

/// One affine term: coeff * op(field). The field is an optimization block
/// (kind Block), a fixed discrete field (kind Field), or a pointwise function
/// (kind Function, contributes to the constant part only).
struct ExprTerm {
  enum Kind { Block, Field, Function } kind = Block;
  Eigen::MatrixXd coeff;  // out_dim x op_dim
  FieldOp op = FieldOp::Value;
  int component = -1;  // restrict to one value component (-1 = all)
  int dir = -1;        // Partial direction
  int block = -1;      // variable block id (kind Block)
  SpacePtr space;
  Eigen::VectorXd field_values;  // kind Field
  std::function<Eigen::VectorXd(const Eigen::Vector2d&)> func;  // kind Function
};

struct AffineFieldExpr {
  int out_dim = 0;
  std::vector<ExprTerm> terms;
  Eigen::VectorXd constant;  // size out_dim, or empty for zero

  bool has_facet_ops() const;
  /// The single block id referenced, or -1 if none; throws if several.
  int single_block() const;
};

// Expression builders. `block` is the variable-block handle the expression
// will bind to in a BlockProblem.
AffineFieldExpr value_of(int block, SpacePtr space);
AffineFieldExpr component_of(int block, SpacePtr space, int comp);
AffineFieldExpr grad_of(int block, SpacePtr space, int comp = -1);
AffineFieldExpr div_of(int block, SpacePtr space);
AffineFieldExpr sym_grad_vec_of(int block, SpacePtr space);
AffineFieldExpr hessian_vec_of(int block, SpacePtr space);
AffineFieldExpr partial_of(int block, SpacePtr space, int comp, int dir);
AffineFieldExpr jump_of(int block, SpacePtr space, int comp = -1);
AffineFieldExpr normal_grad_jump_of(int block, SpacePtr space);
AffineFieldExpr boundary_trace_of(int block, SpacePtr space, int comp = -1);

AffineFieldExpr field_value_of(const DiscreteField& field);
AffineFieldExpr function_expr(
    int dim, std::function<Eigen::VectorXd(const Eigen::Vector2d&)> fn);

AffineFieldExpr operator*(const Eigen::MatrixXd& C, const AffineFieldExpr& e);
AffineFieldExpr operator*(double a, const AffineFieldExpr& e);
AffineFieldExpr operator+(const AffineFieldExpr& a, const AffineFieldExpr& b);
AffineFieldExpr operator-(const AffineFieldExpr& a, const AffineFieldExpr& b);
AffineFieldExpr operator+(const AffineFieldExpr& a, const Eigen::VectorXd& c);

// ---------------------------------------------------------------------------
// Evaluation

struct CellPoint {
  int cell;
  Eigen::Vector3d bary;
};

struct FacetPoint {
  int facet;
  /// Weights of the sorted facet endpoints, (w0, w1), w0 + w1 = 1.
  double w0 = 0.5, w1 = 0.5;
  /// Adjacent cell used for one-sided ops (0 = first cell).
  int side = 0;
};

/// Exact sparse rows of an expression at one evaluation point:
/// expr(fields) = sum_blocks coeffs * dofs[cols] + constant.
struct ExprRows {
  struct BlockRows {
    int block;
    std::vector<int> cols;  // global dof indices within the block
    Eigen::MatrixXd coeffs;  // out_dim x cols
  };
  int out_dim = 0;
  std::vector<BlockRows> blocks;
  Eigen::VectorXd constant;
};

ExprRows eval_expr_rows(const AffineFieldExpr& expr, const CellPoint& at);
ExprRows eval_expr_rows(const AffineFieldExpr& expr, const FacetPoint& at);

// ---------------------------------------------------------------------------
// Assembly

struct Measure {
  enum Kind { Cells, InteriorFacets, Boundary } kind = Cells;
  /// Boundary region id; 0 selects every boundary facet.
  int region = 0;

  static Measure cells() { return {Cells, 0}; }
  static Measure interior_facets() { return {InteriorFacets, 0}; }
  static Measure boundary(int region = 0) { return {Boundary, region}; }
};

/// Weak rows sum_g w_g psi_i(x_g) . expr(x_g) against a multiplier space.
/// The expression must reference at most one variable block; the returned
/// matrix has that block's dofs as columns. The vector collects the constant
/// (field / function) parts integrated against the multiplier basis.
struct WeakBlock {
  Eigen::SparseMatrix<double> matrix;
  Eigen::VectorXd rhs;
};

WeakBlock assemble_weak_block(const SpacePtr& mult_space,
                              const AffineFieldExpr& expr,
                              const Measure& measure, const QuadRule& quad);

/// Entity ids selected by a measure, in deterministic order.
std::vector<int> measure_entities(const TriMesh& mesh, const Measure& measure);
/// Physical size (area or length) of an entity of the measure.
double entity_measure(const TriMesh& mesh, const Measure& measure, int id);
/// Physical coordinates of a quadrature point on an entity.
Eigen::Vector2d entity_point(const TriMesh& mesh, const Measure& measure,
                             int id, const Eigen::Vector3d& bary);

}  // namespace convexfem

#endif
