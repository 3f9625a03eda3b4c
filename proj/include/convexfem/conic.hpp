#ifndef CONVEXFEM_CONIC_HPP
#define CONVEXFEM_CONIC_HPP

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "convexfem/fem.hpp"

namespace convexfem {

enum class ConeKind { Free, NonNeg, Quad, RQuad };

struct Cone {
  ConeKind kind = ConeKind::Free;
  int dim = 0;

  static Cone free(int d) { return {ConeKind::Free, d}; }
  static Cone nonneg(int d) { return {ConeKind::NonNeg, d}; }
  static Cone quad(int d) { return {ConeKind::Quad, d}; }
  static Cone rquad(int d) { return {ConeKind::RQuad, d}; }
};

/// Membership test with additive slack tol on the defining inequality.
bool cone_contains(const Cone& cone, Eigen::Ref<const Eigen::VectorXd> z,
                   double tol);
/// Largest violation of the cone's defining inequalities (0 if inside).
double cone_violation(const Cone& cone, Eigen::Ref<const Eigen::VectorXd> z);

/// Local template of a conic representable function
///   F(X) = min over Y of cx.X + cy.Y  s.t.  bl <= A X + sum_j B_j Y_j <= bu,
///                                           Y_j in cone_j.
struct ConicRepr {
  struct AuxBlock {
    int dim;
    Cone cone;
  };
  struct RowBlock {
    Eigen::MatrixXd on_input;                // r x input_dim (may be 0 x 0)
    std::vector<Eigen::MatrixXd> on_aux;     // r x aux[j].dim (0 x 0 = absent)
    Eigen::VectorXd lower, upper;
  };

  int input_dim = 0;
  std::vector<AuxBlock> aux;
  std::vector<RowBlock> rows;
  Eigen::VectorXd cost_input;  // empty = zero
  Eigen::VectorXd cost_aux;    // concatenated over aux blocks; empty = zero

  int aux_total() const;
};

/// Structural diagnostics; empty result means the template is well formed.
std::vector<std::string> validate_repr(const ConicRepr& repr);

/// A convex term sum_g w_g |T_g| scale F(expr(x_g)) over a measure.
struct ConvexTermInstance {
  ConicRepr repr;
  AffineFieldExpr input;
  Measure measure = Measure::cells();
  QuadRule quad;
  double scale = 1.0;
  /// Optional per-entity weight multiplying the cost (e.g. facet normal norms).
  std::function<double(int)> entity_scale;
};

// ---------------------------------------------------------------------------
// Flat conic program (the solver input) and its builder.

constexpr double kInf = std::numeric_limits<double>::infinity();

struct ConeSegment {
  Cone cone;
  int start = 0;
};

struct StandardConicProgram {
  Eigen::VectorXd cost;
  double cost_offset = 0.0;
  Eigen::SparseMatrix<double> A;  // row-major bounds bl <= A x <= bu
  Eigen::VectorXd row_lower, row_upper;
  Eigen::VectorXd var_lower, var_upper;
  /// Cone partition of the variables; segments are contiguous, ordered and
  /// cover [0, n) exactly (Free segments included).
  std::vector<ConeSegment> cones;
  bool maximize = false;

  int num_vars() const { return static_cast<int>(cost.size()); }
  int num_rows() const { return static_cast<int>(row_lower.size()); }
  void validate() const;  // throws std::invalid_argument on malformed input
};

class ProgramBuilder {
 public:
  /// Appends free variables, returns the index of the first one.
  int add_vars(int count, double lower = -kInf, double upper = kInf);
  /// Appends a cone-constrained variable block.
  int add_cone_vars(const Cone& cone);
  void set_var_bounds(int index, double lower, double upper);
  void add_cost(int index, double value);
  void add_cost_offset(double value) { cost_offset_ += value; }
  int add_row(const std::vector<std::pair<int, double>>& entries, double lower,
              double upper);
  void set_maximize(bool maximize) { maximize_ = maximize; }

  int num_vars() const { return num_vars_; }
  int num_rows() const { return static_cast<int>(row_lower_.size()); }
  void set_row_bounds(int row, double lower, double upper);

  StandardConicProgram build() const;

 private:
  int num_vars_ = 0;
  std::vector<double> cost_, var_lower_, var_upper_;
  double cost_offset_ = 0.0;
  std::vector<Eigen::Triplet<double>> triplets_;
  std::vector<double> row_lower_, row_upper_;
  std::vector<ConeSegment> cones_;
  bool maximize_ = false;
};

/// Index bookkeeping for expanding convex terms: where each variable block of
/// a BlockProblem lives in the flat program.
struct BlockIndexMap {
  std::vector<int> block_start;  // per variable block
};

struct ExpansionInfo {
  int aux_start = 0;       // first aux variable added
  int aux_count = 0;
  int first_row = 0;
  int row_count = 0;
  /// Rows whose bounds depend on the expression's constant part, with the
  /// data needed to recompute them (used by the rebind fast path).
  struct PointRows {
    int entity;
    int qp;
    int row_start;  // first program row of this point's repr copy
  };
  std::vector<PointRows> points;
};

/// Expands one convex term into the builder: one copy of the template per
/// quadrature point, constraint rows wiring the expression rows to the fresh
/// aux block, and cost entries weighted by w_g |T_g| scale.
ExpansionInfo expand_term(const ConvexTermInstance& term,
                          ProgramBuilder& builder, const BlockIndexMap& blocks);

}  // namespace convexfem

#endif
