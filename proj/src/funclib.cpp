#include "convexfem/funclib.hpp"

#include <cmath>

namespace convexfem {

namespace {

void require_positive(double k, const char* what) {
  if (!(k > 0.0)) throw std::invalid_argument(std::string(what) +
                                              " must be positive");
}

ConicRepr::RowBlock eq_rows(Eigen::MatrixXd on_input,
                            std::vector<Eigen::MatrixXd> on_aux,
                            Eigen::VectorXd rhs) {
  ConicRepr::RowBlock rb;
  rb.on_input = std::move(on_input);
  rb.on_aux = std::move(on_aux);
  rb.lower = rhs;
  rb.upper = std::move(rhs);
  return rb;
}

ConicRepr::RowBlock ineq_rows(Eigen::MatrixXd on_input,
                              std::vector<Eigen::MatrixXd> on_aux,
                              Eigen::VectorXd lower, Eigen::VectorXd upper) {
  ConicRepr::RowBlock rb;
  rb.on_input = std::move(on_input);
  rb.on_aux = std::move(on_aux);
  rb.lower = std::move(lower);
  rb.upper = std::move(upper);
  return rb;
}

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

}  // namespace

FunctionSpec make_l2norm(int dim, double k) {
  require_positive(k, "norm scale");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({dim + 1, Cone::quad(dim + 1)});
  // x - ybar = 0
  Mat on_y = Mat::Zero(dim, dim + 1);
  on_y.rightCols(dim) = -Mat::Identity(dim, dim);
  repr.rows.push_back(eq_rows(Mat::Identity(dim, dim), {on_y}, Vec::Zero(dim)));
  repr.cost_aux = Vec::Zero(dim + 1);
  repr.cost_aux(0) = k;
  return {"l2norm", repr,
          [k](const Vec& x) { return k * x.norm(); }};
}

FunctionSpec make_l1norm(int dim, double k) {
  require_positive(k, "norm scale");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({dim, Cone::free(dim)});
  // 0 <= x + y  and  x - y <= 0
  Mat I = Mat::Identity(dim, dim);
  repr.rows.push_back(ineq_rows(I, {I}, Vec::Zero(dim),
                                Vec::Constant(dim, kInf)));
  repr.rows.push_back(ineq_rows(I, {-I}, Vec::Constant(dim, -kInf),
                                Vec::Zero(dim)));
  repr.cost_aux = Vec::Constant(dim, k);
  return {"l1norm", repr,
          [k](const Vec& x) { return k * x.lpNorm<1>(); }};
}

FunctionSpec make_linfnorm(int dim, double k) {
  require_positive(k, "norm scale");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({1, Cone::free(1)});
  Mat I = Mat::Identity(dim, dim);
  Mat e = Mat::Ones(dim, 1);
  // -y <= x_i <= y for all i
  repr.rows.push_back(ineq_rows(I, {e}, Vec::Zero(dim),
                                Vec::Constant(dim, kInf)));
  repr.rows.push_back(ineq_rows(I, {-e}, Vec::Constant(dim, -kInf),
                                Vec::Zero(dim)));
  repr.cost_aux = Vec::Constant(1, k);
  return {"linfnorm", repr,
          [k](const Vec& x) { return k * x.lpNorm<Eigen::Infinity>(); }};
}

FunctionSpec make_absvalue(double k) {
  require_positive(k, "scale");
  ConicRepr repr;
  repr.input_dim = 1;
  repr.aux.push_back({1, Cone::free(1)});
  Mat one = Mat::Ones(1, 1);
  // x - y <= 0 and -x - y <= 0
  repr.rows.push_back(ineq_rows(one, {-one}, Vec::Constant(1, -kInf),
                                Vec::Zero(1)));
  repr.rows.push_back(ineq_rows(-one, {-one}, Vec::Constant(1, -kInf),
                                Vec::Zero(1)));
  repr.cost_aux = Vec::Constant(1, k);
  return {"absvalue", repr,
          [k](const Vec& x) { return k * std::abs(x(0)); }};
}

FunctionSpec make_quadratic(const Eigen::MatrixXd& C, const Eigen::VectorXd& x0,
                            double k) {
  require_positive(k, "scale");
  const int dim = static_cast<int>(C.cols());
  const int m = static_cast<int>(C.rows());
  if (x0.size() != dim) throw std::invalid_argument("shift size mismatch");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({m + 2, Cone::rquad(m + 2)});
  // y1 = 1
  Mat pick_y1 = Mat::Zero(1, m + 2);
  pick_y1(0, 1) = 1.0;
  repr.rows.push_back(eq_rows(Mat::Zero(1, dim), {pick_y1}, Vec::Ones(1)));
  // C(x - x0) - ybar = 0
  Mat on_y = Mat::Zero(m, m + 2);
  on_y.rightCols(m) = -Mat::Identity(m, m);
  repr.rows.push_back(eq_rows(C, {on_y}, C * x0));
  repr.cost_aux = Vec::Zero(m + 2);
  repr.cost_aux(0) = k;
  return {"quadratic", repr, [C, x0, k](const Vec& x) {
            return 0.5 * k * (C * (x - x0)).squaredNorm();
          }};
}

FunctionSpec make_l2ball(int dim, double k) {
  require_positive(k, "ball radius");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({dim + 1, Cone::quad(dim + 1)});
  Mat on_y = Mat::Zero(dim, dim + 1);
  on_y.rightCols(dim) = -Mat::Identity(dim, dim);
  repr.rows.push_back(eq_rows(Mat::Identity(dim, dim), {on_y}, Vec::Zero(dim)));
  Mat pick_y0 = Mat::Zero(1, dim + 1);
  pick_y0(0, 0) = 1.0;
  repr.rows.push_back(eq_rows(Mat::Zero(1, dim), {pick_y0},
                              Vec::Constant(1, k)));
  return {"l2ball", repr, [k](const Vec& x) {
            return x.norm() <= k ? 0.0 : kInf;
          }};
}

FunctionSpec make_l1ball(int dim, double k) {
  require_positive(k, "ball radius");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({dim, Cone::free(dim)});
  Mat I = Mat::Identity(dim, dim);
  repr.rows.push_back(ineq_rows(I, {I}, Vec::Zero(dim),
                                Vec::Constant(dim, kInf)));
  repr.rows.push_back(ineq_rows(I, {-I}, Vec::Constant(dim, -kInf),
                                Vec::Zero(dim)));
  // e.y <= k
  repr.rows.push_back(ineq_rows(Mat::Zero(1, dim), {Mat::Ones(1, dim)},
                                Vec::Constant(1, -kInf), Vec::Constant(1, k)));
  return {"l1ball", repr, [k](const Vec& x) {
            return x.lpNorm<1>() <= k ? 0.0 : kInf;
          }};
}

FunctionSpec make_linfball(int dim, double k) {
  require_positive(k, "ball radius");
  ConicRepr repr;
  repr.input_dim = dim;
  repr.rows.push_back(ineq_rows(Mat::Identity(dim, dim), {},
                                Vec::Constant(dim, -k), Vec::Constant(dim, k)));
  return {"linfball", repr, [k](const Vec& x) {
            return x.lpNorm<Eigen::Infinity>() <= k ? 0.0 : kInf;
          }};
}

FunctionSpec make_pointwise_inequality(const Eigen::VectorXd& bl,
                                       const Eigen::VectorXd& bu) {
  if (bl.size() != bu.size()) throw std::invalid_argument("bound size mismatch");
  for (Eigen::Index i = 0; i < bl.size(); ++i)
    if (bl(i) > bu(i)) throw std::invalid_argument("crossed bounds");
  const int dim = static_cast<int>(bl.size());
  ConicRepr repr;
  repr.input_dim = dim;
  repr.rows.push_back(ineq_rows(Mat::Identity(dim, dim), {}, bl, bu));
  return {"pointwise_inequality", repr, [bl, bu](const Vec& x) {
            for (Eigen::Index i = 0; i < x.size(); ++i)
              if (x(i) < bl(i) || x(i) > bu(i)) return kInf;
            return 0.0;
          }};
}

FunctionSpec make_transport_cost(int space_dim) {
  if (space_dim != 1 && space_dim != 2)
    throw std::invalid_argument("transport cost supports 1 or 2 space dims");
  const int dim = 1 + space_dim;
  ConicRepr repr;
  repr.input_dim = dim;
  repr.aux.push_back({space_dim + 2, Cone::rquad(space_dim + 2)});
  // (rho, m) - (y1, ybar) = 0
  Mat on_y = Mat::Zero(dim, space_dim + 2);
  on_y(0, 1) = -1.0;
  on_y.bottomRightCorner(space_dim, space_dim) =
      -Mat::Identity(space_dim, space_dim);
  repr.rows.push_back(eq_rows(Mat::Identity(dim, dim), {on_y}, Vec::Zero(dim)));
  repr.cost_aux = Vec::Zero(space_dim + 2);
  repr.cost_aux(0) = 1.0;
  return {"transport_cost", repr, [](const Vec& x) {
            const double rho = x(0);
            const double m2 = x.tail(x.size() - 1).squaredNorm();
            if (rho > 0) return 0.5 * m2 / rho;
            return m2 == 0.0 ? 0.0 : kInf;
          }};
}

}  // namespace convexfem
