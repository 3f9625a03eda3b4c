#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "test_support.hpp"

using namespace convexfem;
using convexfem::testing::repr_minimum;
using Vec = Eigen::VectorXd;

namespace {
Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}
}  // namespace

TEST_CASE("closed-form spot checks") {
  CHECK(repr_minimum(make_l2norm(2).repr, v2(3, 4)) ==
        doctest::Approx(5.0).epsilon(1e-7));
  CHECK(repr_minimum(make_l2norm(2).repr, v2(0, 0)) ==
        doctest::Approx(0.0).epsilon(1e-7));
  CHECK(repr_minimum(make_l1norm(2).repr, v2(3, -4)) ==
        doctest::Approx(7.0).epsilon(1e-7));
  CHECK(repr_minimum(make_l1norm(2).repr, v2(0, 0)) ==
        doctest::Approx(0.0).epsilon(2e-7));
  CHECK(repr_minimum(make_linfnorm(2).repr, v2(3, -4)) ==
        doctest::Approx(4.0).epsilon(1e-7));
  CHECK(repr_minimum(make_linfnorm(2).repr, v2(1, 1)) ==
        doctest::Approx(1.0).epsilon(1e-7));
  CHECK(repr_minimum(make_quadratic(Eigen::Matrix2d::Identity(), Vec::Zero(2))
                         .repr, v2(3, 4)) ==
        doctest::Approx(12.5).epsilon(1e-7));
  CHECK(repr_minimum(make_quadratic(Eigen::Matrix2d::Identity(), v2(3, 4))
                         .repr, v2(3, 4)) ==
        doctest::Approx(0.0).epsilon(1e-7));
  CHECK(repr_minimum(make_absvalue(1.0).repr, Vec::Constant(1, -2.0)) ==
        doctest::Approx(2.0).epsilon(1e-7));
  // plate hinge coefficient: k = 2m/sqrt(3) at m = 1
  CHECK(repr_minimum(make_absvalue(2.0 / std::sqrt(3.0)).repr,
                     Vec::Constant(1, 3.0)) ==
        doctest::Approx(2.0 * std::sqrt(3.0)).epsilon(1e-7));
}

TEST_CASE("scaled l2 norm matches the plastic coefficient") {
  const double tau0 = 0.8;
  double v = repr_minimum(make_l2norm(2, std::sqrt(2.0) * tau0).repr, v2(3, 4));
  CHECK(v == doctest::Approx(std::sqrt(2.0) * tau0 * 5.0).epsilon(1e-7));
  CHECK_THROWS_AS(make_l2norm(2, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(make_l1norm(2, -1.0), std::invalid_argument);
}

TEST_CASE("ball feasibility") {
  CHECK(repr_minimum(make_l2ball(2, 1.0).repr, v2(0.6, 0.8)) ==
        doctest::Approx(0.0));
  CHECK(repr_minimum(make_l2ball(2, 1.0).repr, v2(0.8, 0.8)) == kInf);
  CHECK(repr_minimum(make_l1ball(2, 1.0).repr, v2(0.5, -0.5)) ==
        doctest::Approx(0.0));
  CHECK(repr_minimum(make_l1ball(2, 1.0).repr, v2(0.8, 0.8)) == kInf);
  CHECK(repr_minimum(make_linfball(2, 1.0).repr, v2(1.0, 1.0)) ==
        doctest::Approx(0.0));
  CHECK(repr_minimum(make_linfball(2, 1.0).repr, v2(1.1, 0.0)) == kInf);
}

TEST_CASE("pointwise inequality band") {
  const double eps = 1e-6;
  auto spec = make_pointwise_inequality(Vec::Constant(1, -eps),
                                        Vec::Constant(1, eps));
  CHECK(repr_minimum(spec.repr, Vec::Constant(1, 0.0)) == 0.0);
  CHECK(repr_minimum(spec.repr, Vec::Constant(1, 2 * eps)) == kInf);
  auto eq = make_pointwise_inequality(Vec::Constant(1, 2.0),
                                      Vec::Constant(1, 2.0));
  CHECK(repr_minimum(eq.repr, Vec::Constant(1, 2.0)) == 0.0);
  CHECK(repr_minimum(eq.repr, Vec::Constant(1, 2.0001)) == kInf);
  CHECK_THROWS_AS(
      make_pointwise_inequality(Vec::Constant(1, 1.0), Vec::Constant(1, 0.0)),
      std::invalid_argument);
}

TEST_CASE("transport cost") {
  auto spec = make_transport_cost(1);
  CHECK(repr_minimum(spec.repr, v2(2, 2)) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(repr_minimum(spec.repr, v2(1, 0)) == doctest::Approx(0.0).epsilon(1e-6));
  // rho = 0 with m != 0 has no feasible lift
  CHECK(repr_minimum(spec.repr, v2(0, 1)) == kInf);
}

TEST_CASE("plate factor matches the quadratic form") {
  Eigen::Matrix3d J;
  J << 2, 1, 0, 0, std::sqrt(3.0), 0, 0, 0, 1;
  Eigen::Matrix3d JtJ = J.transpose() * J;
  Eigen::Matrix3d expected;
  expected << 4, 2, 0, 2, 4, 0, 0, 0, 1;
  // sqrt(3)^2 rounds one ulp under 3, everything else is exact
  CHECK((JtJ - expected).lpNorm<Eigen::Infinity>() <= 5e-16);
}

TEST_CASE("oracle equivalence on random inputs") {
  std::vector<FunctionSpec> specs = {
      make_l2norm(2, 1.0),   make_l2norm(3, 2.5),  make_l1norm(3, 1.0),
      make_linfnorm(3, 0.5), make_absvalue(2.0),
      make_quadratic(testing::random_vec(6, 1).reshaped(2, 3).eval(),
                     testing::random_vec(3, 2)),
      make_transport_cost(1), make_transport_cost(2)};
  for (const auto& spec : specs) {
    CAPTURE(spec.name);
    for (unsigned i = 0; i < 25; ++i) {
      Vec X = testing::random_vec(spec.repr.input_dim, 100 + i);
      if (spec.name == "transport_cost") X(0) = std::abs(X(0)) + 0.1;
      double closed = spec.closed_form(X);
      double lifted = repr_minimum(spec.repr, X);
      CHECK(std::abs(closed - lifted) <= 1e-6 * (1.0 + std::abs(closed)));
    }
  }
}

TEST_CASE("ball indicators agree with the closed form on random points") {
  std::vector<FunctionSpec> balls = {make_l2ball(2, 0.8), make_l1ball(3, 1.2),
                                     make_linfball(2, 0.5)};
  for (const auto& spec : balls) {
    CAPTURE(spec.name);
    int mismatches = 0;
    for (unsigned i = 0; i < 1000; ++i) {
      Vec X = 1.4 * testing::random_vec(spec.repr.input_dim, 500 + i);
      double closed = spec.closed_form(X);
      double margin = closed == 0.0 ? -1e-9 : 1e-9;  // skip razor-thin cases
      (void)margin;
      double lifted = repr_minimum(spec.repr, X, 1e-10);
      bool closed_feasible = closed == 0.0;
      bool lifted_feasible = lifted < kInf;
      if (closed_feasible != lifted_feasible) ++mismatches;
    }
    CHECK(mismatches == 0);
  }
}

TEST_CASE("norm homogeneity") {
  std::vector<FunctionSpec> norms = {make_l2norm(3, 1.7), make_l1norm(2, 0.9),
                                     make_linfnorm(4, 1.1)};
  for (const auto& spec : norms) {
    for (unsigned i = 0; i < 10; ++i) {
      Vec X = testing::random_vec(spec.repr.input_dim, 900 + i);
      double once = repr_minimum(spec.repr, X);
      double twice = repr_minimum(spec.repr, Vec(2 * X));
      CHECK(twice == doctest::Approx(2 * once).epsilon(1e-8));
    }
  }
}

TEST_CASE("quadratic gradient matches finite differences") {
  Eigen::MatrixXd C = testing::random_vec(9, 21).reshaped(3, 3).eval();
  Vec x0 = testing::random_vec(3, 22);
  const double k = 1.6;
  auto spec = make_quadratic(C, x0, k);
  Vec X = testing::random_vec(3, 23);
  Eigen::Matrix3d H = k * (C.transpose() * C);
  Vec expected_grad = H * (X - x0);
  const double h = 1e-5;
  for (int d = 0; d < 3; ++d) {
    Vec e = Vec::Zero(3);
    e(d) = h;
    double fd = (repr_minimum(spec.repr, X + e) -
                 repr_minimum(spec.repr, X - e)) /
                (2 * h);
    CHECK(fd == doctest::Approx(expected_grad(d)).epsilon(1e-4));
  }
}
