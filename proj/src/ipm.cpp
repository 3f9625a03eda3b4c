#include "convexfem/ipm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/SparseCholesky>

namespace convexfem {

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

constexpr double kRotInv = M_SQRT1_2;  // 1/sqrt(2)

// Rotation taking an RQuad vector to the Quad cone; symmetric and orthogonal.
Vec rquad_to_quad(const Vec& v) {
  Vec out = v;
  out(0) = kRotInv * (v(0) + v(1));
  out(1) = kRotInv * (v(0) - v(1));
  return out;
}

// ---------------------------------------------------------------------------
// Cone blocks of the slack variables: one NonNeg block plus SOC blocks.

struct ConeBlocks {
  int num_nonneg = 0;
  std::vector<int> soc_start, soc_dim;
  int total = 0;
  int degree() const {
    return num_nonneg + static_cast<int>(soc_dim.size());
  }
};

struct Scalings {
  Vec lin_w2;     // w_i^2 = s_i / z_i on the NonNeg part
  Vec lambda;     // scaled point, full length
  struct Soc {
    double eta2;  // eta^2
    Vec wbar;
  };
  std::vector<Soc> soc;
};

double jnorm2(const Eigen::Ref<const Vec>& u) {
  return u(0) * u(0) - u.tail(u.size() - 1).squaredNorm();
}

bool compute_scalings(const ConeBlocks& cones, const Vec& s, const Vec& z,
                      Scalings& W) {
  const int nl = cones.num_nonneg;
  W.lin_w2.resize(nl);
  W.lambda.resize(cones.total);
  for (int i = 0; i < nl; ++i) {
    if (s(i) <= 0 || z(i) <= 0) return false;
    W.lin_w2(i) = s(i) / z(i);
    W.lambda(i) = std::sqrt(s(i) * z(i));
  }
  W.soc.resize(cones.soc_dim.size());
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], d = cones.soc_dim[k];
    auto sk = s.segment(at, d);
    auto zk = z.segment(at, d);
    const double s2 = jnorm2(sk), z2 = jnorm2(zk);
    if (s2 <= 0 || z2 <= 0 || sk(0) <= 0 || zk(0) <= 0) return false;
    const double sn = std::sqrt(s2), zn = std::sqrt(z2);
    Vec sbar = sk / sn, zbar = zk / zn;
    const double gamma =
        std::sqrt(0.5 * (1.0 + sbar.dot(zbar)));
    Vec wbar = sbar;
    wbar(0) += zbar(0);
    wbar.tail(d - 1) -= zbar.tail(d - 1);
    wbar /= 2.0 * gamma;
    W.soc[k].eta2 = sn / zn;
    W.soc[k].wbar = wbar;
    // lambda = W z
    const double eta = std::sqrt(W.soc[k].eta2);
    auto& lam = W.lambda;
    const double w0 = wbar(0);
    const auto w1 = wbar.tail(d - 1);
    const double zdot = w1.dot(zk.tail(d - 1));
    lam(at) = eta * (w0 * zk(0) + zdot);
    lam.segment(at + 1, d - 1) =
        eta * (zk.tail(d - 1) + (zk(0) + zdot / (1.0 + w0)) * w1);
  }
  return true;
}

// y = W u (NT scaling applied blockwise)
Vec scaling_mult(const ConeBlocks& cones, const Scalings& W, const Vec& u) {
  Vec out(u.size());
  for (int i = 0; i < cones.num_nonneg; ++i)
    out(i) = std::sqrt(W.lin_w2(i)) * u(i);
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], d = cones.soc_dim[k];
    const double eta = std::sqrt(W.soc[k].eta2);
    const double w0 = W.soc[k].wbar(0);
    const auto w1 = W.soc[k].wbar.tail(d - 1);
    const auto uk = u.segment(at, d);
    const double dot = w1.dot(uk.tail(d - 1));
    out(at) = eta * (w0 * uk(0) + dot);
    out.segment(at + 1, d - 1) =
        eta * (uk.tail(d - 1) + (uk(0) + dot / (1.0 + w0)) * w1);
  }
  return out;
}

// y = W^{-1} u
Vec scaling_solve(const ConeBlocks& cones, const Scalings& W, const Vec& u) {
  Vec out(u.size());
  for (int i = 0; i < cones.num_nonneg; ++i)
    out(i) = u(i) / std::sqrt(W.lin_w2(i));
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], d = cones.soc_dim[k];
    const double eta = std::sqrt(W.soc[k].eta2);
    const double w0 = W.soc[k].wbar(0);
    const auto w1 = W.soc[k].wbar.tail(d - 1);
    const auto uk = u.segment(at, d);
    const double dot = w1.dot(uk.tail(d - 1));
    out(at) = (w0 * uk(0) - dot) / eta;
    out.segment(at + 1, d - 1) =
        (uk.tail(d - 1) + (-uk(0) + dot / (1.0 + w0)) * w1) / eta;
  }
  return out;
}

// y = W^2 u
Vec scaling_mult2(const ConeBlocks& cones, const Scalings& W, const Vec& u) {
  Vec out(u.size());
  for (int i = 0; i < cones.num_nonneg; ++i) out(i) = W.lin_w2(i) * u(i);
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], d = cones.soc_dim[k];
    const auto& wbar = W.soc[k].wbar;
    const auto uk = u.segment(at, d);
    Vec Ju = uk;
    Ju.tail(d - 1) = -uk.tail(d - 1);
    out.segment(at, d) =
        W.soc[k].eta2 * (2.0 * wbar.dot(uk) * wbar - Ju);
  }
  return out;
}

// Jordan product u o v
Vec jordan_prod(const ConeBlocks& cones, const Vec& u, const Vec& v) {
  Vec out(u.size());
  for (int i = 0; i < cones.num_nonneg; ++i) out(i) = u(i) * v(i);
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], d = cones.soc_dim[k];
    const auto uk = u.segment(at, d);
    const auto vk = v.segment(at, d);
    out(at) = uk.dot(vk);
    out.segment(at + 1, d - 1) =
        uk(0) * vk.tail(d - 1) + vk(0) * uk.tail(d - 1);
  }
  return out;
}

// Solve lambda o x = d
Vec jordan_solve(const ConeBlocks& cones, const Vec& lambda, const Vec& d) {
  Vec out(d.size());
  for (int i = 0; i < cones.num_nonneg; ++i) out(i) = d(i) / lambda(i);
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], dd = cones.soc_dim[k];
    const auto lk = lambda.segment(at, dd);
    const auto dk = d.segment(at, dd);
    const double det = jnorm2(lk);
    const double x0 = (lk(0) * dk(0) - lk.tail(dd - 1).dot(dk.tail(dd - 1))) / det;
    out(at) = x0;
    out.segment(at + 1, dd - 1) =
        (dk.tail(dd - 1) - x0 * lk.tail(dd - 1)) / lk(0);
  }
  return out;
}

Vec cone_identity(const ConeBlocks& cones) {
  Vec e = Vec::Zero(cones.total);
  e.head(cones.num_nonneg).setOnes();
  for (size_t k = 0; k < cones.soc_dim.size(); ++k)
    e(cones.soc_start[k]) = 1.0;
  return e;
}

double positive_root(double c2, double c1, double c0) {
  // smallest positive root of c2 a^2 + c1 a + c0 = 0, or +inf
  const double inf = kInf;
  if (std::abs(c2) < 1e-300) {
    if (c1 >= 0) return inf;  // c0 > 0, increasing or constant
    return -c0 / c1;
  }
  double disc = c1 * c1 - 4 * c2 * c0;
  if (disc < 0) return inf;
  double sq = std::sqrt(disc);
  double q = -0.5 * (c1 + (c1 >= 0 ? sq : -sq));
  double r1 = q / c2, r2 = (q != 0.0) ? c0 / q : inf;
  double best = inf;
  if (r1 > 0) best = std::min(best, r1);
  if (r2 > 0) best = std::min(best, r2);
  return best;
}

// Largest step with u + a du staying in the cone product.
double max_step(const ConeBlocks& cones, const Vec& u, const Vec& du) {
  double alpha = kInf;
  for (int i = 0; i < cones.num_nonneg; ++i)
    if (du(i) < 0) alpha = std::min(alpha, -u(i) / du(i));
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const int at = cones.soc_start[k], d = cones.soc_dim[k];
    const auto uk = u.segment(at, d);
    const auto dk = du.segment(at, d);
    const double c2 = jnorm2(dk);
    const double c1 =
        2.0 * (uk(0) * dk(0) - uk.tail(d - 1).dot(dk.tail(d - 1)));
    const double c0 = jnorm2(uk);
    alpha = std::min(alpha, positive_root(c2, c1, c0));
    if (dk(0) < 0) alpha = std::min(alpha, -uk(0) / dk(0));
  }
  return alpha;
}

bool strictly_interior(const ConeBlocks& cones, const Vec& u) {
  for (int i = 0; i < cones.num_nonneg; ++i)
    if (!(u(i) > 0)) return false;
  for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
    const auto uk = u.segment(cones.soc_start[k], cones.soc_dim[k]);
    if (!(uk(0) > 0) || !(jnorm2(uk) > 0)) return false;
  }
  return true;
}

}  // namespace

void IpmSettings::validate() const {
  if (!(feas_tol > 0) || !(gap_tol > 0) || max_iter <= 0 ||
      !(static_reg > 0) || !(step_fraction > 0) || !(step_fraction < 1))
    throw std::invalid_argument("invalid solver settings");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::Unbounded: return "unbounded";
    case SolveStatus::MaxIter: return "max_iter";
  }
  return "?";
}

namespace {
// Membership defect in linear units: RQuad is rotated to Quad first so the
// measure is comparable across cones and iterate scales.
double stop_violation(const Cone& cone, Eigen::Ref<const Vec> z) {
  if (cone.kind == ConeKind::RQuad) {
    const double q0 = M_SQRT1_2 * (z(0) + z(1));
    const double q1 = M_SQRT1_2 * (z(0) - z(1));
    return std::max(0.0, std::hypot(z.tail(z.size() - 2).norm(), q1) - q0);
  }
  return cone_violation(cone, z);
}
}  // namespace

KktResiduals kkt_residuals(const StandardConicProgram& program, const Vec& x,
                           const Duals& duals) {
  KktResiduals out;
  const Vec c = program.maximize ? Vec(-program.cost) : program.cost;
  const Vec ax = program.A * x;

  double bscale = 0.0;
  double pviol = 0.0;
  for (int r = 0; r < program.num_rows(); ++r) {
    if (std::isfinite(program.row_lower(r))) {
      bscale = std::max(bscale, std::abs(program.row_lower(r)));
      pviol = std::max(pviol, program.row_lower(r) - ax(r));
    }
    if (std::isfinite(program.row_upper(r))) {
      bscale = std::max(bscale, std::abs(program.row_upper(r)));
      pviol = std::max(pviol, ax(r) - program.row_upper(r));
    }
  }
  for (int i = 0; i < program.num_vars(); ++i) {
    if (std::isfinite(program.var_lower(i))) {
      bscale = std::max(bscale, std::abs(program.var_lower(i)));
      pviol = std::max(pviol, program.var_lower(i) - x(i));
    }
    if (std::isfinite(program.var_upper(i))) {
      bscale = std::max(bscale, std::abs(program.var_upper(i)));
      pviol = std::max(pviol, x(i) - program.var_upper(i));
    }
  }
  out.primal = std::max(pviol, 0.0) / (1.0 + bscale);

  for (const auto& seg : program.cones)
    if (seg.cone.kind != ConeKind::Free)
      out.cone_violation = std::max(
          out.cone_violation,
          stop_violation(seg.cone, x.segment(seg.start, seg.cone.dim)));

  Vec rd = c - program.A.transpose() * duals.rows - duals.bound_lower +
           duals.bound_upper - duals.cone;
  out.dual = rd.lpNorm<Eigen::Infinity>() /
             (1.0 + c.lpNorm<Eigen::Infinity>());

  double pobj = c.dot(x);
  double dobj = 0.0;
  for (int r = 0; r < program.num_rows(); ++r) {
    const double lr = duals.rows(r);
    if (lr > 0)
      dobj += std::isfinite(program.row_lower(r)) ? lr * program.row_lower(r)
                                                  : -kInf;
    else if (lr < 0)
      dobj += std::isfinite(program.row_upper(r)) ? lr * program.row_upper(r)
                                                  : -kInf;
  }
  for (int i = 0; i < program.num_vars(); ++i) {
    if (duals.bound_lower(i) > 0)
      dobj += std::isfinite(program.var_lower(i))
                  ? duals.bound_lower(i) * program.var_lower(i)
                  : -kInf;
    if (duals.bound_upper(i) > 0)
      dobj -= std::isfinite(program.var_upper(i))
                  ? duals.bound_upper(i) * program.var_upper(i)
                  : kInf;
  }
  out.gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
  return out;
}

CanonicalForm canonicalize(const StandardConicProgram& program) {
  program.validate();
  CanonicalForm cf;
  const int n0 = program.num_vars();
  cf.num_original_vars = n0;
  cf.c = program.maximize ? Vec(-program.cost) : program.cost;

  std::vector<Triplet> eqT, loT;  // loT: NonNeg rows of G
  std::vector<double> b, h_lin;
  std::vector<CanonicalForm::RowSource> eq_src, lo_src;

  // Row-major copy for per-row iteration.
  Eigen::SparseMatrix<double, Eigen::RowMajor> Ar(program.A);
  auto row_of = [&](int r) {
    std::vector<std::pair<int, double>> entries;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(Ar, r);
         it; ++it)
      entries.emplace_back(it.col(), it.value());
    return entries;
  };

  for (int r = 0; r < program.num_rows(); ++r) {
    const double lo = program.row_lower(r), hi = program.row_upper(r);
    const bool flo = std::isfinite(lo), fhi = std::isfinite(hi);
    if (!flo && !fhi) continue;
    auto entries = row_of(r);
    if (flo && fhi && lo == hi) {
      int row = static_cast<int>(b.size());
      for (auto& [j, v] : entries) eqT.emplace_back(row, j, v);
      b.push_back(lo);
      eq_src.push_back({CanonicalForm::RowKind::UserEq, r, 0});
      continue;
    }
    if (flo) {
      int row = static_cast<int>(h_lin.size());
      for (auto& [j, v] : entries) loT.emplace_back(row, j, -v);
      h_lin.push_back(-lo);
      lo_src.push_back({CanonicalForm::RowKind::UserLo, r, 0});
    }
    if (fhi) {
      int row = static_cast<int>(h_lin.size());
      for (auto& [j, v] : entries) loT.emplace_back(row, j, v);
      h_lin.push_back(hi);
      lo_src.push_back({CanonicalForm::RowKind::UserUp, r, 0});
    }
  }

  for (int i = 0; i < n0; ++i) {
    const double lo = program.var_lower(i), hi = program.var_upper(i);
    const bool flo = std::isfinite(lo), fhi = std::isfinite(hi);
    if (flo && fhi && lo == hi) {
      int row = static_cast<int>(b.size());
      eqT.emplace_back(row, i, 1.0);
      b.push_back(lo);
      eq_src.push_back({CanonicalForm::RowKind::VarFix, i, 0});
      continue;
    }
    if (flo) {
      int row = static_cast<int>(h_lin.size());
      loT.emplace_back(row, i, -1.0);
      h_lin.push_back(-lo);
      lo_src.push_back({CanonicalForm::RowKind::VarLo, i, 0});
    }
    if (fhi) {
      int row = static_cast<int>(h_lin.size());
      loT.emplace_back(row, i, 1.0);
      h_lin.push_back(hi);
      lo_src.push_back({CanonicalForm::RowKind::VarUp, i, 0});
    }
  }

  // Declared NonNeg segments become plain sign rows.
  for (size_t seg = 0; seg < program.cones.size(); ++seg) {
    const auto& cs = program.cones[seg];
    if (cs.cone.kind != ConeKind::NonNeg) continue;
    for (int k = 0; k < cs.cone.dim; ++k) {
      int row = static_cast<int>(h_lin.size());
      loT.emplace_back(row, cs.start + k, -1.0);
      h_lin.push_back(0.0);
      lo_src.push_back({CanonicalForm::RowKind::ConeRow, int(seg), k});
    }
  }
  cf.num_nonneg = static_cast<int>(h_lin.size());

  // SOC blocks: s = x_seg (Quad) or s = T x_seg (RQuad rotated to Quad).
  std::vector<Triplet> socT;
  std::vector<CanonicalForm::RowSource> soc_src;
  int soc_rows = 0;
  for (size_t seg = 0; seg < program.cones.size(); ++seg) {
    const auto& cs = program.cones[seg];
    if (cs.cone.kind != ConeKind::Quad && cs.cone.kind != ConeKind::RQuad)
      continue;
    const int d = cs.cone.dim;
    for (int k = 0; k < d; ++k) {
      if (cs.cone.kind == ConeKind::Quad) {
        socT.emplace_back(soc_rows + k, cs.start + k, -1.0);
      } else if (k == 0) {
        socT.emplace_back(soc_rows, cs.start, -kRotInv);
        socT.emplace_back(soc_rows, cs.start + 1, -kRotInv);
      } else if (k == 1) {
        socT.emplace_back(soc_rows + 1, cs.start, -kRotInv);
        socT.emplace_back(soc_rows + 1, cs.start + 1, kRotInv);
      } else {
        socT.emplace_back(soc_rows + k, cs.start + k, -1.0);
      }
      soc_src.push_back({CanonicalForm::RowKind::ConeRow, int(seg), k});
    }
    soc_rows += d;
    cf.soc_dims.push_back(d);
  }

  // Dense column splitting keeps the factorization sparse when a variable
  // couples a large fraction of the rows.
  int n = n0;
  {
    const int total_rows = static_cast<int>(b.size() + h_lin.size() + soc_rows);
    const int threshold =
        std::max(64, static_cast<int>(0.2 * total_rows));
    bool changed = true;
    while (changed) {
      changed = false;
      std::vector<int> count(n, 0);
      for (const auto& t : eqT) ++count[t.col()];
      for (const auto& t : loT) ++count[t.col()];
      for (const auto& t : socT) ++count[t.col()];
      for (int j = 0; j < n; ++j) {
        if (count[j] <= threshold) continue;
        // move the second half of column j to a fresh clone column
        int seen = 0, half = count[j] / 2;
        auto relocate = [&](std::vector<Triplet>& ts) {
          for (auto& t : ts) {
            if (t.col() != j) continue;
            if (++seen > half) t = Triplet(t.row(), n, t.value());
          }
        };
        relocate(eqT);
        relocate(loT);
        relocate(socT);
        int row = static_cast<int>(b.size());
        eqT.emplace_back(row, j, 1.0);
        eqT.emplace_back(row, n, -1.0);
        b.push_back(0.0);
        eq_src.push_back({CanonicalForm::RowKind::CloneLink, j, 0});
        ++n;
        changed = true;
        break;
      }
    }
  }
  if (n > n0) {
    Vec c2 = Vec::Zero(n);
    c2.head(n0) = cf.c;
    cf.c = c2;
  }

  const int p = static_cast<int>(b.size());
  const int m = cf.num_nonneg + soc_rows;
  cf.A.resize(p, n);
  cf.A.setFromTriplets(eqT.begin(), eqT.end());
  cf.b = Eigen::Map<const Vec>(b.data(), b.size());
  std::vector<Triplet> gT = loT;
  for (const auto& t : socT)
    gT.emplace_back(cf.num_nonneg + t.row(), t.col(), t.value());
  cf.G.resize(m, n);
  cf.G.setFromTriplets(gT.begin(), gT.end());
  cf.h = Vec::Zero(m);
  cf.h.head(cf.num_nonneg) =
      Eigen::Map<const Vec>(h_lin.data(), h_lin.size());
  cf.eq_source = std::move(eq_src);
  cf.g_source = std::move(lo_src);
  cf.g_source.insert(cf.g_source.end(), soc_src.begin(), soc_src.end());
  return cf;
}

namespace {

struct Equilibration {
  Vec d, e, f;  // columns, eq rows, G rows
};

Equilibration equilibrate(CanonicalForm& cf, const ConeBlocks& cones) {
  const int n = static_cast<int>(cf.c.size());
  const int p = static_cast<int>(cf.b.size());
  const int m = static_cast<int>(cf.h.size());
  Equilibration eq{Vec::Ones(n), Vec::Ones(p), Vec::Ones(m)};

  for (int pass = 0; pass < 3; ++pass) {
    Vec cmax = Vec::Zero(n), rmaxA = Vec::Zero(p), rmaxG = Vec::Zero(m);
    for (int k = 0; k < cf.A.outerSize(); ++k)
      for (SpMat::InnerIterator it(cf.A, k); it; ++it) {
        double a = std::abs(it.value());
        cmax(it.col()) = std::max(cmax(it.col()), a);
        rmaxA(it.row()) = std::max(rmaxA(it.row()), a);
      }
    for (int k = 0; k < cf.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(cf.G, k); it; ++it) {
        double a = std::abs(it.value());
        cmax(it.col()) = std::max(cmax(it.col()), a);
        rmaxG(it.row()) = std::max(rmaxG(it.row()), a);
      }
    // uniform scaling inside each SOC block
    for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
      double blockmax =
          rmaxG.segment(cones.soc_start[k], cones.soc_dim[k]).maxCoeff();
      rmaxG.segment(cones.soc_start[k], cones.soc_dim[k]).setConstant(blockmax);
    }
    auto factor = [](double v) { return v > 1e-12 ? 1.0 / std::sqrt(v) : 1.0; };
    Vec dc = cmax.unaryExpr(factor), da = rmaxA.unaryExpr(factor),
        dg = rmaxG.unaryExpr(factor);
    for (int k = 0; k < cf.A.outerSize(); ++k)
      for (SpMat::InnerIterator it(cf.A, k); it; ++it)
        it.valueRef() *= da(it.row()) * dc(it.col());
    for (int k = 0; k < cf.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(cf.G, k); it; ++it)
        it.valueRef() *= dg(it.row()) * dc(it.col());
    eq.d.array() *= dc.array();
    eq.e.array() *= da.array();
    eq.f.array() *= dg.array();
  }
  cf.b.array() *= eq.e.array();
  cf.h.array() *= eq.f.array();
  cf.c.array() *= eq.d.array();
  return eq;
}

struct Recovered {
  Vec x;
  Duals duals;
  Vec cone_slack;
  double pobj_min = 0.0;  // minimize-form objective, no offset
  double dobj_min = 0.0;
};

}  // namespace

IpmResult solve(const StandardConicProgram& program,
                const IpmSettings& settings) {
  settings.validate();
  CanonicalForm cf = canonicalize(program);

  ConeBlocks cones;
  cones.num_nonneg = cf.num_nonneg;
  int at = cf.num_nonneg;
  for (int d : cf.soc_dims) {
    cones.soc_start.push_back(at);
    cones.soc_dim.push_back(d);
    at += d;
  }
  cones.total = at;

  Equilibration eqd{Vec::Ones(cf.c.size()), Vec::Ones(cf.b.size()),
                    Vec::Ones(cf.h.size())};
  if (settings.equilibrate) eqd = equilibrate(cf, cones);

  const int n = static_cast<int>(cf.c.size());
  const int p = static_cast<int>(cf.b.size());
  const int m = static_cast<int>(cf.h.size());
  const int dim = n + p + m;
  double delta = settings.static_reg;

  // ----- KKT machinery -----------------------------------------------------
  // The NT blocks span the full double range near convergence; once a
  // double-precision factorization can no longer deliver accurate steps the
  // factorization and refinement escalate to long double.
  using LD = long double;
  using VecLD = Eigen::Matrix<LD, Eigen::Dynamic, 1>;
  using SpMatLD = Eigen::SparseMatrix<LD>;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower> ldlt;
  Eigen::SimplicialLDLT<SpMatLD, Eigen::Lower> ldlt_ld;
  SpMat K(dim, dim);
  SpMatLD K_ld(dim, dim), Ktrue_ld(dim, dim);
  bool analyzed = false, analyzed_ld = false, extended = false;
  Scalings W;

  auto assemble_triplets = [&](bool with_reg) {
    std::vector<Triplet> ts;
    ts.reserve(n + p + m + cf.A.nonZeros() + cf.G.nonZeros() + 16);
    const double dreg = with_reg ? delta : 0.0;
    for (int j = 0; j < n; ++j) ts.emplace_back(j, j, dreg);
    for (int k = 0; k < cf.A.outerSize(); ++k)
      for (SpMat::InnerIterator it(cf.A, k); it; ++it)
        ts.emplace_back(n + it.row(), it.col(), it.value());
    for (int r = 0; r < p; ++r) ts.emplace_back(n + r, n + r, -dreg);
    for (int k = 0; k < cf.G.outerSize(); ++k)
      for (SpMat::InnerIterator it(cf.G, k); it; ++it)
        ts.emplace_back(n + p + it.row(), it.col(), it.value());
    for (int i = 0; i < cones.num_nonneg; ++i)
      ts.emplace_back(n + p + i, n + p + i, -W.lin_w2(i) - dreg);
    for (size_t k = 0; k < cones.soc_dim.size(); ++k) {
      const int s0 = cones.soc_start[k], d = cones.soc_dim[k];
      const auto& wbar = W.soc[k].wbar;
      const double eta2 = W.soc[k].eta2;
      for (int a = 0; a < d; ++a) {
        for (int bcol = 0; bcol <= a; ++bcol) {
          double jab = (a == bcol) ? (a == 0 ? 1.0 : -1.0) : 0.0;
          double w2 = eta2 * (2.0 * wbar(a) * wbar(bcol) - jab);
          double v = -w2 - (a == bcol ? dreg : 0.0);
          ts.emplace_back(n + p + s0 + a, n + p + s0 + bcol, v);
        }
      }
    }
    return ts;
  };

  auto factorize = [&]() {
    std::vector<Triplet> ts = assemble_triplets(true);
    if (!extended) {
      K.setFromTriplets(ts.begin(), ts.end());
      if (!analyzed) {
        ldlt.analyzePattern(K);
        analyzed = true;
      }
      ldlt.factorize(K);
      return ldlt.info() == Eigen::Success;
    }
    std::vector<Eigen::Triplet<LD>> ts_ld;
    ts_ld.reserve(ts.size());
    for (const auto& t : ts)
      ts_ld.emplace_back(t.row(), t.col(), static_cast<LD>(t.value()));
    K_ld.setFromTriplets(ts_ld.begin(), ts_ld.end());
    std::vector<Triplet> tt = assemble_triplets(false);
    ts_ld.clear();
    for (const auto& t : tt)
      ts_ld.emplace_back(t.row(), t.col(), static_cast<LD>(t.value()));
    Ktrue_ld.setFromTriplets(ts_ld.begin(), ts_ld.end());
    if (!analyzed_ld) {
      ldlt_ld.analyzePattern(K_ld);
      analyzed_ld = true;
    }
    ldlt_ld.factorize(K_ld);
    return ldlt_ld.info() == Eigen::Success;
  };

  // Regularization is bumped when the factorization breaks down; iterative
  // refinement against the unregularized matrix recovers the accuracy.
  auto factorize_adaptive = [&]() {
    while (!factorize()) {
      delta *= 100.0;
      if (delta > 1e-2) return false;
    }
    return true;
  };

  // product with the unregularized KKT matrix
  auto kkt_mult = [&](const Vec& u) {
    Vec v(dim);
    v.head(n) = cf.A.transpose() * u.segment(n, p) +
                cf.G.transpose() * u.tail(m);
    v.segment(n, p) = cf.A * u.head(n);
    v.tail(m) = cf.G * u.head(n) - scaling_mult2(cones, W, u.tail(m));
    return v;
  };

  auto kkt_refined_double = [&](const Vec& rhs) {
    Vec u = ldlt.solve(rhs);
    const double target = 1e-12 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    const int max_passes = std::max(settings.refine_passes, 8);
    double best_resid = (rhs - kkt_mult(u)).lpNorm<Eigen::Infinity>();
    Vec best = u;
    for (int pass = 0; pass < max_passes && best_resid > target; ++pass) {
      Vec r = rhs - kkt_mult(u);
      u += ldlt.solve(r);
      double resid = (rhs - kkt_mult(u)).lpNorm<Eigen::Infinity>();
      if (resid >= best_resid) break;  // refinement stopped contracting
      best_resid = resid;
      best = u;
    }
    return std::make_pair(best, best_resid);
  };

  // Residuals of the long double path are also measured in long double: the
  // NT blocks reach 1e12 and a double-precision residual cannot see below
  // their rounding noise.
  auto kkt_refined_ld = [&](const Vec& rhs) {
    VecLD rhs_ld = rhs.cast<LD>();
    VecLD u = ldlt_ld.solve(rhs_ld);
    const LD target =
        1e-13L * (1.0L + rhs_ld.template lpNorm<Eigen::Infinity>());
    auto resid_of = [&](const VecLD& v) {
      return (rhs_ld - Ktrue_ld.selfadjointView<Eigen::Lower>() * v)
          .template lpNorm<Eigen::Infinity>();
    };
    LD best_resid = resid_of(u);
    VecLD best = u;
    int stale = 0;
    for (int pass = 0; pass < 40 && best_resid > target && stale < 2; ++pass) {
      VecLD r = rhs_ld - Ktrue_ld.selfadjointView<Eigen::Lower>() * u;
      u += ldlt_ld.solve(r);
      LD resid = resid_of(u);
      if (resid < best_resid) {
        best_resid = resid;
        best = u;
        stale = 0;
      } else {
        ++stale;
      }
    }
    return std::make_pair(Vec(best.cast<double>()),
                          static_cast<double>(best_resid));
  };

  auto kkt_solve = [&](const Vec& rhs) {
    const double accept = 1e-9 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
    if (!extended) {
      auto [u, resid] = kkt_refined_double(rhs);
      if (u.allFinite() && resid <= accept) return u;
      extended = true;
      if (!factorize_adaptive()) return u;
    }
    auto [u, resid] = kkt_refined_ld(rhs);
    if (!u.allFinite()) {
      delta *= 100.0;
      if (delta <= 1e-2 && factorize_adaptive()) u = kkt_refined_ld(rhs).first;
    }
    return u;
  };

  // ----- state --------------------------------------------------------------
  Vec x = Vec::Zero(n), y = Vec::Zero(p);
  Vec s = cone_identity(cones), z = cone_identity(cones);
  double tau = 1.0, kappa = 1.0;

  IpmResult result;
  result.x = Vec::Zero(cf.num_original_vars);
  result.duals.rows = Vec::Zero(program.num_rows());
  result.duals.bound_lower = Vec::Zero(program.num_vars());
  result.duals.bound_upper = Vec::Zero(program.num_vars());
  result.duals.cone = Vec::Zero(program.num_vars());
  result.cone_slack = Vec::Zero(program.num_vars());

  auto recover = [&]() {
    Recovered rec;
    Vec xu = (eqd.d.array() * x.array()).matrix() / tau;
    Vec yu = (eqd.e.array() * y.array()).matrix() / tau;
    Vec zu = (eqd.f.array() * z.array()).matrix() / tau;
    Vec su = (s.array() / eqd.f.array()).matrix() / tau;
    rec.x = xu.head(cf.num_original_vars);
    rec.duals.rows = Vec::Zero(program.num_rows());
    rec.duals.bound_lower = Vec::Zero(program.num_vars());
    rec.duals.bound_upper = Vec::Zero(program.num_vars());
    rec.duals.cone = Vec::Zero(program.num_vars());
    rec.cone_slack = Vec::Zero(program.num_vars());
    for (int r = 0; r < p; ++r) {
      const auto& src = cf.eq_source[r];
      switch (src.kind) {
        case CanonicalForm::RowKind::UserEq:
          rec.duals.rows(src.index) = -yu(r);
          break;
        case CanonicalForm::RowKind::VarFix: {
          double mu = -yu(r);
          rec.duals.bound_lower(src.index) = std::max(mu, 0.0);
          rec.duals.bound_upper(src.index) = std::max(-mu, 0.0);
          break;
        }
        default:
          break;  // CloneLink is internal
      }
    }
    std::vector<Vec> seg_dual, seg_slack;
    for (const auto& cseg : program.cones) {
      seg_dual.emplace_back(Vec::Zero(cseg.cone.dim));
      seg_slack.emplace_back(Vec::Zero(cseg.cone.dim));
    }
    for (int r = 0; r < m; ++r) {
      const auto& src = cf.g_source[r];
      switch (src.kind) {
        case CanonicalForm::RowKind::UserLo:
          rec.duals.rows(src.index) += zu(r);
          break;
        case CanonicalForm::RowKind::UserUp:
          rec.duals.rows(src.index) -= zu(r);
          break;
        case CanonicalForm::RowKind::VarLo:
          rec.duals.bound_lower(src.index) = zu(r);
          break;
        case CanonicalForm::RowKind::VarUp:
          rec.duals.bound_upper(src.index) = zu(r);
          break;
        case CanonicalForm::RowKind::ConeRow:
          seg_dual[src.index](src.offset) = zu(r);
          seg_slack[src.index](src.offset) = su(r);
          break;
        default:
          break;
      }
    }
    for (size_t seg = 0; seg < program.cones.size(); ++seg) {
      const auto& cseg = program.cones[seg];
      if (cseg.cone.kind == ConeKind::Free) continue;
      Vec dual = seg_dual[seg], slack = seg_slack[seg];
      if (cseg.cone.kind == ConeKind::RQuad) {
        dual = rquad_to_quad(dual);
        slack = rquad_to_quad(slack);
      }
      if (cseg.cone.kind == ConeKind::NonNeg) {
        // sign rows came in as -x <= 0
        rec.duals.cone.segment(cseg.start, cseg.cone.dim) = dual;
        rec.cone_slack.segment(cseg.start, cseg.cone.dim) = slack;
      } else {
        rec.duals.cone.segment(cseg.start, cseg.cone.dim) = dual;
        rec.cone_slack.segment(cseg.start, cseg.cone.dim) = slack;
      }
    }
    rec.pobj_min = cf.c.dot(x) / tau;  // scaled c . scaled x == c . x
    rec.dobj_min = -(cf.b.dot(y) + cf.h.dot(z)) / tau;
    return rec;
  };

  auto finish = [&](SolveStatus status, const Recovered& rec, int iters) {
    result.status = status;
    result.x = rec.x;
    result.duals = rec.duals;
    result.cone_slack = rec.cone_slack;
    KktResiduals res = kkt_residuals(program, rec.x, rec.duals);
    result.primal_res = res.primal;
    result.dual_res = res.dual;
    result.gap = res.gap;
    result.cone_violation = res.cone_violation;
    double po = rec.pobj_min, dd = rec.dobj_min;
    result.objective = (program.maximize ? -po : po) + program.cost_offset;
    result.dual_objective = (program.maximize ? -dd : dd) + program.cost_offset;
    result.iterations = iters;
    return result;
  };

  const double cnorm = 1.0 + cf.c.lpNorm<Eigen::Infinity>();
  const double bhnorm =
      1.0 + std::max(p ? cf.b.lpNorm<Eigen::Infinity>() : 0.0,
                     m ? cf.h.lpNorm<Eigen::Infinity>() : 0.0);

  // The tail of the path can degrade once the scaling matrices span the full
  // double range; the best iterate seen is kept and reported on a stall.
  Recovered best_rec;
  double best_score = kInf;
  double last_alpha = 0.0, last_sigma = 0.0;
  int iter = 0;
  for (; iter < settings.max_iter; ++iter) {
    // residuals of the embedding
    Vec rx = cf.A.transpose() * y + cf.G.transpose() * z + cf.c * tau;
    Vec ry = cf.A * x - cf.b * tau;
    Vec rz = cf.G * x + s - cf.h * tau;
    double rtau = cf.c.dot(x) + cf.b.dot(y) + cf.h.dot(z) + kappa;
    double mu = (s.dot(z) + tau * kappa) / (cones.degree() + 1);

    // convergence / certificates
    Recovered rec = recover();
    KktResiduals res = kkt_residuals(program, rec.x, rec.duals);
    double score = std::max({res.primal / settings.feas_tol,
                             res.dual / settings.feas_tol,
                             res.gap / settings.gap_tol,
                             res.cone_violation / settings.feas_tol});
    if (score < best_score) {
      best_score = score;
      best_rec = rec;
    }
    if (settings.log) {
      char buf[192];
      std::snprintf(buf, sizeof(buf),
                    "iter %3d  mu %9.2e  pres %9.2e  dres %9.2e  gap %9.2e  "
                    "cone %9.2e  tau %9.2e  kappa %9.2e  step %5.3f  "
                    "sigma %8.2e",
                    iter, mu, res.primal, res.dual, res.gap,
                    res.cone_violation, tau, kappa, last_alpha, last_sigma);
      settings.log(buf);
    }
    if (res.primal <= settings.feas_tol && res.dual <= settings.feas_tol &&
        res.gap <= settings.gap_tol &&
        res.cone_violation <= settings.feas_tol)
      return finish(SolveStatus::Optimal, rec, iter);

    // infeasibility certificates
    const double by_hz = cf.b.dot(y) + cf.h.dot(z);
    if (by_hz < 0) {
      double quality = (cf.A.transpose() * y + cf.G.transpose() * z)
                           .lpNorm<Eigen::Infinity>() /
                       (-by_hz) * bhnorm;
      if (quality <= settings.feas_tol && tau <= 1e-6 * std::min(1.0, kappa))
        return finish(SolveStatus::Infeasible, rec, iter);
    }
    const double cx = cf.c.dot(x);
    if (cx < 0) {
      double qa = p ? (cf.A * x).lpNorm<Eigen::Infinity>() : 0.0;
      double qg = m ? (cf.G * x + s).lpNorm<Eigen::Infinity>() : 0.0;
      double quality = std::max(qa, qg) / (-cx) * cnorm;
      if (quality <= settings.feas_tol && tau <= 1e-6 * std::min(1.0, kappa))
        return finish(SolveStatus::Unbounded, rec, iter);
    }

    if (!compute_scalings(cones, s, z, W)) break;
    if (!factorize_adaptive()) break;

    Vec rhs1(dim);
    rhs1.head(n) = -cf.c;
    rhs1.segment(n, p) = cf.b;
    rhs1.tail(m) = cf.h;
    Vec u1 = kkt_solve(rhs1);
    const double phi1 =
        cf.c.dot(u1.head(n)) + cf.b.dot(u1.segment(n, p)) + cf.h.dot(u1.tail(m));

    auto direction = [&](const Vec& dx_lin, const Vec& dy_lin,
                         const Vec& dz_lin, double dtau_lin, const Vec& ds_cone,
                         double dkappa_in, Vec& dx, Vec& dy, Vec& dz, Vec& ds,
                         double& dtau, double& dkappa) {
      Vec lam_inv_ds = jordan_solve(cones, W.lambda, ds_cone);
      Vec rhs2(dim);
      rhs2.head(n) = dx_lin;
      rhs2.segment(n, p) = dy_lin;
      rhs2.tail(m) = dz_lin - scaling_mult(cones, W, lam_inv_ds);
      Vec u2 = kkt_solve(rhs2);
      const double phi2 = cf.c.dot(u2.head(n)) +
                          cf.b.dot(u2.segment(n, p)) + cf.h.dot(u2.tail(m));
      const double denom = phi1 - kappa / tau;
      dtau = (dtau_lin - dkappa_in / tau - phi2) / denom;
      dx = u2.head(n) + dtau * u1.head(n);
      dy = u2.segment(n, p) + dtau * u1.segment(n, p);
      dz = u2.tail(m) + dtau * u1.tail(m);
      ds = scaling_mult(cones, W,
                        Vec(lam_inv_ds - scaling_mult(cones, W, dz)));
      dkappa = (dkappa_in - kappa * dtau) / tau;
    };

    // predictor
    Vec lam2 = jordan_prod(cones, W.lambda, W.lambda);
    Vec dxa, dya, dza, dsa;
    double dtaua, dkappaa;
    direction(-rx, -ry, -rz, -rtau, Vec(-lam2), -tau * kappa, dxa, dya, dza,
              dsa, dtaua, dkappaa);
    if (!dxa.allFinite() || !std::isfinite(dtaua)) break;

    double alpha_aff = std::min(
        {1.0, max_step(cones, s, dsa), max_step(cones, z, dza),
         dtaua < 0 ? -tau / dtaua : kInf, dkappaa < 0 ? -kappa / dkappaa : kInf});
    double sigma = std::pow(1.0 - alpha_aff, 3);
    sigma = std::clamp(sigma, 0.0, 0.9999);

    // corrector
    Vec wds = scaling_solve(cones, W, dsa);   // W^{-1} ds_aff
    Vec wdz = scaling_mult(cones, W, dza);    // W dz_aff
    Vec ds_comb = sigma * mu * cone_identity(cones) - lam2 -
                  jordan_prod(cones, wds, wdz);
    double dkappa_comb = sigma * mu - tau * kappa - dtaua * dkappaa;
    const double lin = 1.0 - sigma;
    Vec dx, dy, dz, ds;
    double dtau, dkappa;
    direction(Vec(-lin * rx), Vec(-lin * ry), Vec(-lin * rz), -lin * rtau,
              ds_comb, dkappa_comb, dx, dy, dz, ds, dtau, dkappa);
    if (!dx.allFinite() || !std::isfinite(dtau)) break;

    double alpha_max = std::min(
        {max_step(cones, s, ds), max_step(cones, z, dz),
         dtau < 0 ? -tau / dtau : kInf, dkappa < 0 ? -kappa / dkappa : kInf});
    double alpha = std::min(settings.step_fraction * alpha_max, 1.0);

    bool ok = false;
    for (int tries = 0; tries < 30; ++tries) {
      Vec s_new = s + alpha * ds, z_new = z + alpha * dz;
      double tau_new = tau + alpha * dtau, kappa_new = kappa + alpha * dkappa;
      if (strictly_interior(cones, s_new) && strictly_interior(cones, z_new) &&
          tau_new > 0 && kappa_new > 0) {
        x += alpha * dx;
        y += alpha * dy;
        z = z_new;
        s = s_new;
        tau = tau_new;
        kappa = kappa_new;
        last_alpha = alpha;
        last_sigma = sigma;
        ok = true;
        break;
      }
      alpha *= 0.9;
    }
    if (!ok || alpha < 1e-13) break;
  }

  // a stalled run reports the best iterate seen
  Recovered rec = recover();
  KktResiduals res = kkt_residuals(program, rec.x, rec.duals);
  double score = std::max({res.primal / settings.feas_tol,
                           res.dual / settings.feas_tol,
                           res.gap / settings.gap_tol,
                           res.cone_violation / settings.feas_tol});
  if (score > best_score) rec = best_rec;
  SolveStatus status =
      std::min(score, best_score) <= 1.0 ? SolveStatus::Optimal
                                         : SolveStatus::MaxIter;
  return finish(status, rec, iter);
}

}  // namespace convexfem
