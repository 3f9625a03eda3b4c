#ifndef CONVEXFEM_TEST_SUPPORT_HPP
#define CONVEXFEM_TEST_SUPPORT_HPP

// Test-only oracles, kept independent of the code paths they check.

#include <random>

#include "convexfem/funclib.hpp"
#include "convexfem/ipm.hpp"

namespace convexfem::testing {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline Vec random_vec(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

/// Minimum of a conic template over its aux variables at a fixed input X,
/// computed by solving the small local program. Returns +inf when
/// infeasible.
inline double repr_minimum(const ConicRepr& repr, const Vec& X,
                           double tol = 1e-10) {
  ProgramBuilder builder;
  std::vector<int> aux_start;
  for (const auto& blk : repr.aux)
    aux_start.push_back(builder.add_cone_vars(blk.cone));
  for (const auto& rb : repr.rows) {
    for (Eigen::Index i = 0; i < rb.lower.size(); ++i) {
      std::vector<std::pair<int, double>> entries;
      double shift = rb.on_input.size() ? rb.on_input.row(i).dot(X) : 0.0;
      for (size_t j = 0; j < rb.on_aux.size(); ++j) {
        if (!rb.on_aux[j].size()) continue;
        for (int k = 0; k < repr.aux[j].dim; ++k)
          if (rb.on_aux[j](i, k) != 0.0)
            entries.emplace_back(aux_start[j] + k, rb.on_aux[j](i, k));
      }
      double lo = rb.lower(i) == -kInf ? -kInf : rb.lower(i) - shift;
      double hi = rb.upper(i) == kInf ? kInf : rb.upper(i) - shift;
      builder.add_row(entries, lo, hi);
    }
  }
  if (repr.cost_aux.size()) {
    int at = 0;
    for (size_t j = 0; j < repr.aux.size(); ++j)
      for (int k = 0; k < repr.aux[j].dim; ++k, ++at)
        if (repr.cost_aux(at) != 0.0)
          builder.add_cost(aux_start[j] + k, repr.cost_aux(at));
  }
  double base = repr.cost_input.size() ? repr.cost_input.dot(X) : 0.0;
  if (builder.num_vars() == 0) {
    // indicator template: feasibility of the fixed rows
    StandardConicProgram p = builder.build();
    for (int r = 0; r < p.num_rows(); ++r)
      if (0.0 < p.row_lower(r) - 1e-9 || 0.0 > p.row_upper(r) + 1e-9)
        return kInf;
    return base;
  }
  IpmSettings settings;
  settings.feas_tol = tol;
  settings.gap_tol = tol;
  IpmResult res = solve(builder.build(), settings);
  if (res.status == SolveStatus::Infeasible) return kInf;
  if (res.status == SolveStatus::Unbounded) return -kInf;
  // weakly infeasible lifts stall without ever becoming feasible
  if (res.status == SolveStatus::MaxIter &&
      (res.primal_res > 1e-6 || res.cone_violation > 1e-6))
    return kInf;
  return base + res.objective;
}

/// Random feasible SOCP in the flat program form: equality rows plus a cone
/// partition of x, built around a known strictly feasible primal/dual pair so
/// the optimum is finite.
struct RandomSocp {
  StandardConicProgram program;
  Vec x_feasible;
  double dual_bound;  // b . y0 for the constructed dual-feasible point
};

inline RandomSocp random_socp(unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_int_distribution<int> ncones(1, 3);
  std::uniform_int_distribution<int> conedim(2, 4);
  std::uniform_int_distribution<int> kindpick(0, 2);

  std::vector<Cone> cones;
  int n = 0;
  const int blocks = ncones(rng) + 1;
  for (int b = 0; b < blocks && n < 24; ++b) {
    int kind = kindpick(rng);
    int d = conedim(rng);
    if (kind == 0)
      cones.push_back(Cone::nonneg(d));
    else if (kind == 1)
      cones.push_back(Cone::quad(d + 1));
    else
      cones.push_back(Cone::rquad(d + 1));
    n += cones.back().dim;
  }
  std::uniform_int_distribution<int> mrows(1, std::max(1, n / 2));
  const int m = mrows(rng);

  // strictly interior primal point
  Vec x0(n);
  int at = 0;
  std::vector<ConeSegment> segs;
  for (const auto& cone : cones) {
    segs.push_back({cone, at});
    if (cone.kind == ConeKind::NonNeg) {
      for (int i = 0; i < cone.dim; ++i) x0(at + i) = 0.5 + 0.5 * std::abs(unif(rng));
    } else if (cone.kind == ConeKind::Quad) {
      for (int i = 1; i < cone.dim; ++i) x0(at + i) = 0.3 * unif(rng);
      x0(at) = x0.segment(at + 1, cone.dim - 1).norm() + 0.5;
    } else {
      for (int i = 2; i < cone.dim; ++i) x0(at + i) = 0.3 * unif(rng);
      x0(at) = 0.5 + std::abs(unif(rng));
      x0(at + 1) =
          x0.segment(at + 2, cone.dim - 2).squaredNorm() / (2 * x0(at)) + 0.4;
    }
    at += cone.dim;
  }

  Mat A(m, n);
  for (int r = 0; r < m; ++r)
    for (int c = 0; c < n; ++c) A(r, c) = unif(rng);
  Vec b = A * x0;

  // strictly interior dual point: c = A^T y0 + z0 with z0 in int K
  Vec y0(m);
  for (int r = 0; r < m; ++r) y0(r) = unif(rng);
  Vec z0(n);
  at = 0;
  for (const auto& cone : cones) {
    if (cone.kind == ConeKind::NonNeg) {
      for (int i = 0; i < cone.dim; ++i) z0(at + i) = 0.4 + 0.5 * std::abs(unif(rng));
    } else if (cone.kind == ConeKind::Quad) {
      for (int i = 1; i < cone.dim; ++i) z0(at + i) = 0.3 * unif(rng);
      z0(at) = z0.segment(at + 1, cone.dim - 1).norm() + 0.4;
    } else {
      for (int i = 2; i < cone.dim; ++i) z0(at + i) = 0.3 * unif(rng);
      z0(at) = 0.4 + std::abs(unif(rng));
      z0(at + 1) =
          z0.segment(at + 2, cone.dim - 2).squaredNorm() / (2 * z0(at)) + 0.3;
    }
    at += cone.dim;
  }
  Vec c = A.transpose() * y0 + z0;

  RandomSocp out;
  out.program.cost = c;
  out.program.A = A.sparseView();
  out.program.row_lower = b;
  out.program.row_upper = b;
  out.program.var_lower = Vec::Constant(n, -kInf);
  out.program.var_upper = Vec::Constant(n, kInf);
  out.program.cones = segs;
  out.x_feasible = x0;
  out.dual_bound = b.dot(y0);
  return out;
}

/// Euclidean projection onto a cone product (used by the subgradient oracle).
inline Vec project_cones(const std::vector<ConeSegment>& segs, Vec v) {
  for (const auto& seg : segs) {
    auto part = v.segment(seg.start, seg.cone.dim);
    switch (seg.cone.kind) {
      case ConeKind::Free:
        break;
      case ConeKind::NonNeg:
        part = part.cwiseMax(0.0);
        break;
      case ConeKind::Quad: {
        const double t = part(0);
        const double nr = part.tail(part.size() - 1).norm();
        if (t >= nr) break;
        if (t <= -nr) {
          part.setZero();
          break;
        }
        const double a = 0.5 * (t + nr);
        part(0) = a;
        part.tail(part.size() - 1) *= a / nr;
        break;
      }
      case ConeKind::RQuad: {
        // rotate, project onto Quad, rotate back
        Vec q = part;
        const double r = M_SQRT1_2;
        q(0) = r * (part(0) + part(1));
        q(1) = r * (part(0) - part(1));
        std::vector<ConeSegment> one = {{Cone::quad(seg.cone.dim), 0}};
        q = project_cones(one, q);
        Vec back = q;
        back(0) = r * (q(0) + q(1));
        back(1) = r * (q(0) - q(1));
        part = back;
        break;
      }
    }
  }
  return v;
}

/// Projected-subgradient oracle for the random SOCPs, independent of the
/// interior-point path: the iterate is kept on the equality manifold by exact
/// projection, cone membership enters through an exact distance penalty, and
/// the Polyak step target is tightened from feasible upper bounds produced by
/// alternating projections.
inline double subgradient_oracle(const RandomSocp& instance,
                                 int iterations = 200000) {
  const auto& p = instance.program;
  const Mat A = Mat(p.A);
  const Vec b = p.row_lower;
  const Vec c = p.cost;

  Eigen::LLT<Mat> AAt((A * A.transpose()).eval());
  auto project_affine = [&](const Vec& v) {
    return (v - A.transpose() * AAt.solve(A * v - b)).eval();
  };
  auto tangent = [&](const Vec& g) {
    return (g - A.transpose() * AAt.solve(A * g)).eval();
  };
  // alternating projections toward K intersect {Ax=b}; returns a feasible
  // value or +inf if the residual did not wash out
  auto feasible_value = [&](Vec z) {
    for (int k = 0; k < 400; ++k)
      z = project_affine(project_cones(p.cones, z));
    z = project_cones(p.cones, z);
    if ((A * z - b).norm() > 1e-9) return kInf;
    return c.dot(z);
  };

  double rho = 5.0 * (1.0 + c.norm());
  double best = kInf;
  for (int attempt = 0; attempt < 3; ++attempt) {
    Vec x_best = instance.x_feasible;  // strictly feasible by construction
    best = std::min(best, c.dot(x_best));
    // restarted target phases keep the steps energetic once the easy digits
    // are in
    const int phases = 8;
    for (int phase = 0; phase < phases; ++phase) {
      double delta = 0.1 * (1.0 + std::abs(best)) * std::pow(0.2, phase);
      Vec x = x_best;
      double best_at_check = best;
      for (int it = 0; it < iterations / phases; ++it) {
        Vec xp = project_cones(p.cones, x);
        double dist = (x - xp).norm();
        double value = c.dot(x) + rho * dist;
        Vec g = c;
        if (dist > 1e-15) g += rho * (x - xp) / dist;
        g = tangent(g);
        double gn2 = g.squaredNorm();
        if (gn2 < 1e-26) break;
        double step = std::max(value - (best - delta), 0.25 * delta) / gn2;
        x = project_affine(x - step * g);
        if ((it + 1) % 500 == 0) {
          double fv = feasible_value(x);
          if (fv < best) {
            best = fv;
            Vec z = x;
            for (int k = 0; k < 400; ++k)
              z = project_affine(project_cones(p.cones, z));
            x_best = z;
          }
          if (best > best_at_check - 0.1 * delta)
            delta = std::max(0.7 * delta, 1e-12 * (1.0 + std::abs(best)));
          best_at_check = best;
        }
      }
    }
    if (best < kInf) return best;
    rho *= 4.0;
  }
  return best;
}

}  // namespace convexfem::testing

#endif
