#ifndef CONVEXFEM_FUNCLIB_HPP
#define CONVEXFEM_FUNCLIB_HPP

#include <functional>
#include <string>

#include "convexfem/conic.hpp"

namespace convexfem {

/// A prebuilt conic-representable function together with its closed form,
/// used by the oracle-equivalence tests. The closed form returns +inf outside
/// the function's domain (ball indicators).
struct FunctionSpec {
  std::string name;
  ConicRepr repr;
  std::function<double(const Eigen::VectorXd&)> closed_form;
};

// Norm scales k multiply the cost; ball parameters k are radii.
FunctionSpec make_l2norm(int dim, double k = 1.0);       // k ||x||_2
FunctionSpec make_l1norm(int dim, double k = 1.0);       // k sum |x_i|
FunctionSpec make_linfnorm(int dim, double k = 1.0);     // k max |x_i|
FunctionSpec make_absvalue(double k = 1.0);              // k |x|, scalar
// (k/2) ||C (x - x0)||_2^2
FunctionSpec make_quadratic(const Eigen::MatrixXd& C, const Eigen::VectorXd& x0,
                            double k = 1.0);
FunctionSpec make_l2ball(int dim, double k);             // ||x||_2 <= k
FunctionSpec make_l1ball(int dim, double k);             // sum |x_i| <= k
FunctionSpec make_linfball(int dim, double k);           // max |x_i| <= k
// indicator of bl <= x <= bu componentwise
FunctionSpec make_pointwise_inequality(const Eigen::VectorXd& bl,
                                       const Eigen::VectorXd& bu);
// Benamou-Brenier cost c(rho, m), input (rho, m) of dimension 1 + space_dim
FunctionSpec make_transport_cost(int space_dim);

}  // namespace convexfem

#endif
