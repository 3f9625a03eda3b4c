#ifndef CONVEXFEM_IPM_HPP
#define CONVEXFEM_IPM_HPP

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "convexfem/conic.hpp"

namespace convexfem {

struct IpmSettings {
  double feas_tol = 1e-8;
  double gap_tol = 1e-8;
  int max_iter = 100;
  double static_reg = 1e-9;
  double step_fraction = 0.99;
  int refine_passes = 2;
  bool equilibrate = true;
  /// Called once per iteration with a formatted log line.
  std::function<void(const std::string&)> log;

  void validate() const;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, MaxIter };

const char* to_string(SolveStatus status);

/// Multipliers in the sign convention of the minimized form:
///   c = A^T rows + bound_lower - bound_upper + cone.
struct Duals {
  Eigen::VectorXd rows;
  Eigen::VectorXd bound_lower;  // >= 0, reduced costs of lower bounds
  Eigen::VectorXd bound_upper;  // >= 0
  Eigen::VectorXd cone;         // aligned with x, zero outside cone segments
};

struct IpmResult {
  SolveStatus status = SolveStatus::MaxIter;
  Eigen::VectorXd x;
  Duals duals;
  /// Cone slack values aligned with x (copies of the converged cone segments).
  Eigen::VectorXd cone_slack;
  double objective = 0.0;       // in the program's sense, offset included
  double dual_objective = 0.0;  // the dual bound, mapped to the same sense
  double primal_res = 0.0, dual_res = 0.0, gap = 0.0, cone_violation = 0.0;
  int iterations = 0;
};

struct KktResiduals {
  double primal = 0.0;
  double dual = 0.0;
  double gap = 0.0;
  double cone_violation = 0.0;
};

/// Residuals of a candidate primal/dual pair for the original (pre-slack)
/// program. Residuals always refer to the minimized form; a maximize program
/// is evaluated with its cost negated.
KktResiduals kkt_residuals(const StandardConicProgram& program,
                           const Eigen::VectorXd& x, const Duals& duals);

/// Slack form min c.x s.t. A x = b, G x + s = h, s in NonNeg x Quad x ...
/// Every finite bound becomes a NonNeg slack row of G; equality rows and
/// pinned variables (equal bounds) go to A; declared Quad cones become
/// identity rows of G and RQuad cones are rotated to Quad by the isometry
/// ((z0+z1)/sqrt2, (z0-z1)/sqrt2, zbar).
struct CanonicalForm {
  Eigen::VectorXd c;
  Eigen::SparseMatrix<double> A;  // p x n
  Eigen::SparseMatrix<double> G;  // m x n
  Eigen::VectorXd b, h;
  int num_nonneg = 0;
  std::vector<int> soc_dims;
  int num_original_vars = 0;  // n minus dense-column clones

  // provenance for dual recovery
  enum class RowKind { UserEq, VarFix, CloneLink, UserLo, UserUp, VarLo, VarUp,
                       ConeRow };
  struct RowSource {
    RowKind kind;
    int index;  // user row / variable / cone segment
    int offset; // row within a cone segment
  };
  std::vector<RowSource> eq_source;  // per A row
  std::vector<RowSource> g_source;   // per G row
};

CanonicalForm canonicalize(const StandardConicProgram& program);

IpmResult solve(const StandardConicProgram& program,
                const IpmSettings& settings = {});

}  // namespace convexfem

#endif
