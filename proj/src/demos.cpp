#include "convexfem/demos.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "convexfem/io.hpp"

namespace convexfem {

namespace {

namespace fs = std::filesystem;
using Vec = Eigen::VectorXd;
using Vec2 = Eigen::Vector2d;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct DemoContext {
  const DemoConfig& cfg;
  fs::path out;

  explicit DemoContext(const DemoConfig& config) : cfg(config), out(config.out_dir) {
    fs::create_directories(out);
  }

  IpmSettings solver_settings() const {
    IpmSettings s;
    s.feas_tol = cfg.tol;
    s.gap_tol = cfg.tol;
    s.max_iter = static_cast<int>(cfg.param("max_iter", 100));
    if (cfg.log) s.log = cfg.log;
    return s;
  }

  void write_summary(const DemoResult& r) const {
    std::ostringstream csv;
    csv << "demo,n,variant,objective,gap,iterations\n"
        << cfg.demo << ',' << cfg.n << ','
        << (cfg.variant.empty() ? "-" : cfg.variant) << ',' << fmt(r.objective)
        << ',' << fmt(r.gap) << ',' << r.iterations << '\n';
    write_file_atomic(out / "summary.csv", csv.str());
  }

  void write_diagnostics(const SolutionBundle& sol) const {
    std::ostringstream ss;
    const char* diag = cfg.diagonal == Diagonal::Left
                           ? "left"
                           : cfg.diagonal == Diagonal::Right ? "right"
                                                             : "crossed";
    ss << "status: " << to_string(sol.status) << '\n'
       << "diagonal: " << diag << '\n'
       << "objective: " << fmt(sol.objective) << '\n'
       << "gap: " << fmt(sol.gap) << '\n'
       << "primal_res: " << fmt(sol.primal_res) << '\n'
       << "dual_res: " << fmt(sol.dual_res) << '\n'
       << "iterations: " << sol.iterations << '\n';
    write_file_atomic(out / "diagnostics.txt", ss.str());
  }

  void maybe_export(BlockProblem& prob) const {
    if (!cfg.export_program) return;
    std::ostringstream ss;
    convexfem::export_program(prob.assemble(), ss);
    write_file_atomic(out / "program.txt", ss.str());
  }

  void write_vtk_file(const std::string& name, const TriMesh& mesh,
                      const std::vector<NamedField>& fields) const {
    std::ostringstream ss;
    write_vtk(mesh, fields, ss);
    write_file_atomic(out / name, ss.str());
  }

  DemoResult finish(BlockProblem& prob, const SolutionBundle& sol,
                    DemoResult r) const {
    r.status = sol.status;
    r.gap = sol.gap;
    r.iterations = sol.iterations;
    maybe_export(prob);
    write_diagnostics(sol);
    write_summary(r);
    return r;
  }
};

std::shared_ptr<const TriMesh> demo_mesh(const DemoConfig& cfg) {
  auto it = cfg.str_params.find("mesh");
  if (it != cfg.str_params.end()) {
    std::ifstream in(it->second);
    if (!in) throw std::runtime_error("cannot open mesh file " + it->second);
    return std::make_shared<TriMesh>(read_mesh(in));
  }
  return std::make_shared<TriMesh>(unit_square_mesh(cfg.n, cfg.diagonal));
}

int locate_cell(const TriMesh& mesh, const Vec2& x, Eigen::Vector3d* bary) {
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cv = mesh.cell(c);
    Eigen::Matrix2d J;
    J.col(0) = mesh.vertex(cv[1]) - mesh.vertex(cv[0]);
    J.col(1) = mesh.vertex(cv[2]) - mesh.vertex(cv[0]);
    Vec2 xi = J.inverse() * (x - mesh.vertex(cv[0]));
    double l0 = 1.0 - xi(0) - xi(1);
    if (xi(0) >= -1e-10 && xi(1) >= -1e-10 && l0 >= -1e-10) {
      *bary = Eigen::Vector3d(l0, xi(0), xi(1));
      return c;
    }
  }
  return -1;
}

// ---------------------------------------------------------------------------
// obstacle (membrane against a rigid obstacle)

DemoResult demo_obstacle(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto mesh = demo_mesh(cfg);
  auto V = function_space(mesh, Family::CG, 1);

  const double g0 = cfg.param("g0", -0.1), a = cfg.param("a", 0.01);
  const double k1 = cfg.param("k1", 2), k2 = cfg.param("k2", 8);
  const double f = cfg.param("f", -5.0);
  auto g = [=](const Vec2& x) {
    return g0 + a * std::sin(2 * M_PI * k1 * x(0)) *
                    std::cos(2 * M_PI * k1 * x(1)) *
                    std::sin(2 * M_PI * k2 * x(0)) *
                    std::cos(2 * M_PI * k2 * x(1));
  };
  DiscreteField obstacle = interpolate_scalar(V, g);

  BlockProblem prob("obstacle");
  BlockProblem::VarOpts opts;
  opts.lower = obstacle;
  opts.dirichlet = {DirichletBC::constant(0, 0.0)};
  int u = prob.add_var(V, opts);

  auto centroid = quadrature_rule(QuadSpec::centroid(), QuadRule::Cell);
  prob.add_obj_form(u, [f](const Vec2&) {
    return Eigen::VectorXd::Constant(1, -f);
  }, centroid);

  ConvexTermInstance grad_energy;
  grad_energy.repr =
      make_quadratic(Eigen::Matrix2d::Identity(), Vec::Zero(2)).repr;
  grad_energy.input = grad_of(u, V);
  grad_energy.quad = centroid;
  prob.add_convex_term(std::move(grad_energy));

  SolutionBundle sol = prob.optimize(ctx.solver_settings());

  const DiscreteField& uh = sol.fields[0];
  Vec contact(V->total_dofs());
  for (int i = 0; i < contact.size(); ++i)
    contact(i) = uh.values(i) - obstacle.values(i) <= 1e-6 ? 1.0 : 0.0;
  ctx.write_vtk_file("obstacle.vtk", *mesh,
                     {{"u", uh},
                      {"obstacle", obstacle},
                      {"contact", DiscreteField{V, contact}}});

  DemoResult r;
  r.objective = sol.objective;
  r.extras["contact_fraction"] = contact.sum() / contact.size();
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// cheeger (generalized Cheeger sets / antiplane limit analysis)

FunctionSpec norm_spec(const std::string& norm, int dim, double k) {
  if (norm == "l2") return make_l2norm(dim, k);
  if (norm == "l1") return make_l1norm(dim, k);
  if (norm == "linf") return make_linfnorm(dim, k);
  throw std::invalid_argument("unknown norm '" + norm + "'");
}

double facet_norm_weight(const TriMesh& mesh, int facet,
                         const std::string& norm) {
  const Vec2 n = mesh.facet_geometry(facet).normal;
  if (norm == "l1") return std::abs(n(0)) + std::abs(n(1));
  if (norm == "linf") return std::max(std::abs(n(0)), std::abs(n(1)));
  return 1.0;
}

DemoResult demo_cheeger(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  const std::string variant = cfg.variant.empty() ? "cg1" : cfg.variant;
  auto mesh = demo_mesh(cfg);
  const double f = cfg.param("f", 1.0);
  auto centroid = quadrature_rule(QuadSpec::centroid(), QuadRule::Cell);
  auto vertex2 = quadrature_rule(QuadSpec::vertex(), QuadRule::Facet);
  auto R = function_space(mesh, Family::Real, 0);

  BlockProblem prob("cheeger", variant == "dual-rt");
  SolutionBundle sol;
  DemoResult r;

  if (variant == "dual-rt") {
    auto VRT = function_space(mesh, Family::RT, 1);
    auto DG0 = function_space(mesh, Family::DG, 0);
    int lam = prob.add_var(R);
    int sig = prob.add_var(VRT);
    // lambda f = div sigma, tested against DG0
    prob.add_eq_constraint(
        DG0, {f * value_of(lam, R), -1.0 * div_of(sig, VRT)},
        BlockProblem::Rhs::zero(), Measure::cells(), centroid);
    ConvexTermInstance ball;
    if (cfg.norm == "l1")
      ball.repr = make_linfball(2, 1.0).repr;
    else if (cfg.norm == "linf")
      ball.repr = make_l1ball(2, 1.0).repr;
    else
      ball.repr = make_l2ball(2, 1.0).repr;
    ball.input = value_of(sig, VRT);
    ball.quad = quadrature_rule(QuadSpec::vertex(), QuadRule::Cell);
    prob.add_convex_term(std::move(ball));
    prob.add_obj_coeffs(lam, Vec::Ones(1));
    sol = prob.optimize(ctx.solver_settings());
    r.objective = sol.objective;
    ctx.write_vtk_file("cheeger.vtk", *mesh,
                       {{"u", sol.multipliers[0]},
                        {"sigma", sol.fields[1]}});
    return ctx.finish(prob, sol, r);
  }

  SpacePtr V;
  bool facet_terms = false;
  QuadRule cell_quad = centroid;
  if (variant == "cg1") {
    V = function_space(mesh, Family::CG, 1);
  } else if (variant == "cg2") {
    V = function_space(mesh, Family::CG, 2);
    cell_quad = quadrature_rule(QuadSpec::vertex(), QuadRule::Cell);
  } else if (variant == "dg0") {
    V = function_space(mesh, Family::DG, 0);
    facet_terms = true;
  } else if (variant == "dg1") {
    V = function_space(mesh, Family::DG, 1);
    facet_terms = true;
  } else {
    throw std::invalid_argument("unknown cheeger variant '" + variant + "'");
  }

  BlockProblem::VarOpts opts;
  if (V->family() == Family::CG) opts.dirichlet = {DirichletBC::constant(0, 0.0)};
  int u = prob.add_var(V, opts);

  if (variant != "dg0") {
    ConvexTermInstance tv;
    tv.repr = norm_spec(cfg.norm, 2, 1.0).repr;
    tv.input = grad_of(u, V);
    tv.quad = cell_quad;
    prob.add_convex_term(std::move(tv));
  }
  if (facet_terms) {
    const std::string norm = cfg.norm;
    const TriMesh* mp = mesh.get();
    ConvexTermInstance jump;
    jump.repr = make_absvalue(1.0).repr;
    jump.input = jump_of(u, V);
    jump.measure = Measure::interior_facets();
    jump.quad = vertex2;
    jump.entity_scale = [mp, norm](int fct) {
      return facet_norm_weight(*mp, fct, norm);
    };
    prob.add_convex_term(std::move(jump));
    ConvexTermInstance trace;
    trace.repr = make_absvalue(1.0).repr;
    trace.input = boundary_trace_of(u, V);
    trace.measure = Measure::boundary();
    trace.quad = vertex2;
    trace.entity_scale = [mp, norm](int fct) {
      return facet_norm_weight(*mp, fct, norm);
    };
    prob.add_convex_term(std::move(trace));
  }

  QuadRule norm_quad = V->degree() >= 2
                           ? quadrature_rule(QuadSpec::gauss(2), QuadRule::Cell)
                           : centroid;
  prob.add_eq_constraint(R, {f * value_of(u, V)}, BlockProblem::Rhs::equal(1.0),
                         Measure::cells(), norm_quad);

  sol = prob.optimize(ctx.solver_settings());
  r.objective = sol.objective;
  ctx.write_vtk_file("cheeger.vtk", *mesh, {{"u", sol.fields[0]}});
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// plate (limit analysis of a thin plate in bending)

DemoResult demo_plate(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto mesh = demo_mesh(cfg);
  auto V = function_space(mesh, Family::CG, 2);
  auto R = function_space(mesh, Family::Real, 0);
  const double m = cfg.param("m", 1.0);
  const double f = cfg.param("f", 1.0);

  BlockProblem prob("plate");
  BlockProblem::VarOpts opts;
  opts.dirichlet = {DirichletBC::constant(0, 0.0)};
  int u = prob.add_var(V, opts);

  Eigen::Matrix3d J;
  J << 2, 1, 0, 0, std::sqrt(3.0), 0, 0, 0, 1;

  ConvexTermInstance curvature;
  curvature.repr = make_l2norm(3, 1.0).repr;
  curvature.input =
      Eigen::MatrixXd((m / std::sqrt(3.0)) * J) * hessian_vec_of(u, V);
  curvature.quad = quadrature_rule(QuadSpec::vertex(), QuadRule::Cell);
  prob.add_convex_term(std::move(curvature));

  ConvexTermInstance hinge;
  hinge.repr = make_absvalue(2.0 * m / std::sqrt(3.0)).repr;
  hinge.input = normal_grad_jump_of(u, V);
  hinge.measure = Measure::interior_facets();
  hinge.quad = quadrature_rule(QuadSpec::vertex(), QuadRule::Facet);
  prob.add_convex_term(std::move(hinge));

  prob.add_eq_constraint(R, {f * value_of(u, V)}, BlockProblem::Rhs::equal(1.0),
                         Measure::cells(),
                         quadrature_rule(QuadSpec::gauss(2), QuadRule::Cell));

  SolutionBundle sol = prob.optimize(ctx.solver_settings());
  DemoResult r;
  r.objective = sol.objective;
  ctx.write_vtk_file("plate.vtk", *mesh, {{"u", sol.fields[0]}});
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// viscoplastic (Bingham lid-driven cavity)

DemoResult demo_viscoplastic(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto mesh = demo_mesh(cfg);
  auto V = function_space(mesh, Family::CG, 2, 2);
  auto Q = function_space(mesh, Family::CG, 1);
  const double mu = cfg.param("mu", 1.0);
  const double tau0 = cfg.param("tau0", 0.5);
  const double lid = cfg.param("U", 1.0);
  auto gauss2 = quadrature_rule(QuadSpec::gauss(2), QuadRule::Cell);

  BlockProblem prob("viscoplastic");
  BlockProblem::VarOpts opts;
  opts.dirichlet = {DirichletBC::constant(kTop, lid, 0),
                    DirichletBC::constant(kTop, 0.0, 1),
                    DirichletBC::constant(kBottom, 0.0),
                    DirichletBC::constant(kLeft, 0.0),
                    DirichletBC::constant(kRight, 0.0)};
  int u = prob.add_var(V, opts);

  prob.add_eq_constraint(Q, {div_of(u, V)}, BlockProblem::Rhs::zero(),
                         Measure::cells(), gauss2);

  ConvexTermInstance visc;
  visc.repr = make_quadratic(Eigen::Matrix3d::Identity(), Vec::Zero(3),
                             2.0 * mu).repr;
  visc.input = sym_grad_vec_of(u, V);
  visc.quad = gauss2;
  prob.add_convex_term(std::move(visc));
  if (tau0 > 0) {
    ConvexTermInstance plast;
    plast.repr = make_l2norm(3, std::sqrt(2.0) * tau0).repr;
    plast.input = sym_grad_vec_of(u, V);
    plast.quad = gauss2;
    prob.add_convex_term(std::move(plast));
  }

  SolutionBundle sol = prob.optimize(ctx.solver_settings());
  const DiscreteField& uh = sol.fields[0];

  // midline profile u_x(y) at x = 0.5
  {
    std::ostringstream csv;
    csv << "y,ux\n";
    const int ns = 101;
    for (int i = 0; i < ns; ++i) {
      Vec2 x(0.5, double(i) / (ns - 1));
      Eigen::Vector3d bary;
      int c = locate_cell(*mesh, x, &bary);
      if (c < 0) continue;
      csv << fmt(x(1)) << ',' << fmt(uh.eval(c, bary)(0)) << '\n';
    }
    write_file_atomic(ctx.out / "midline.csv", csv.str());
  }

  // per-cell stress norm and solid indicator from the strain at gauss points
  auto DG0 = function_space(mesh, Family::DG, 0);
  Vec tau_norm(mesh->num_cells()), strain_norm(mesh->num_cells());
  AffineFieldExpr strain = sym_grad_vec_of(u, V);
  for (int c = 0; c < mesh->num_cells(); ++c) {
    double tmax = 0, smax = 0;
    for (const auto& pt : gauss2.points) {
      ExprRows rows = eval_expr_rows(strain, CellPoint{c, pt});
      Vec local(rows.blocks[0].cols.size());
      for (size_t j = 0; j < rows.blocks[0].cols.size(); ++j)
        local(j) = uh.values(rows.blocks[0].cols[j]);
      const double dn = (rows.blocks[0].coeffs * local).norm();
      smax = std::max(smax, dn);
      if (dn > 1e-12)
        tmax = std::max(tmax, 2 * mu * dn + std::sqrt(2.0) * tau0);
    }
    tau_norm(c) = tmax;
    strain_norm(c) = smax;
  }
  ctx.write_vtk_file("cavity.vtk", *mesh,
                     {{"velocity", uh},
                      {"pressure", sol.multipliers[0]},
                      {"tau_norm", DiscreteField{DG0, tau_norm}},
                      {"strain_norm", DiscreteField{DG0, strain_norm}}});

  DemoResult r;
  r.objective = sol.objective;
  if (tau0 > 0) r.extras["Bi"] = mu * lid / tau0;
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// inpaint (TV restoration of a corrupted image on a CR mesh)

RasterImage synthetic_image(int w, int channels) {
  RasterImage img;
  img.width = img.height = w;
  img.channels = channels;
  img.samples.resize(size_t(w) * w * channels);
  for (int y = 0; y < w; ++y) {
    for (int x = 0; x < w; ++x) {
      double fx = double(x) / (w - 1), fy = double(y) / (w - 1);
      double r = std::hypot(fx - 0.35, fy - 0.4);
      double base = 40 + 150 * fx;
      double disk = r < 0.22 ? 200 : 0;
      double stripes = (std::sin(24 * fy) > 0.3 && fx > 0.55) ? 80 : 0;
      auto clamp8 = [](double v) {
        return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
      };
      if (channels == 1) {
        img.at(x, y, 0) = clamp8(base + disk + stripes * 0.5);
      } else {
        img.at(x, y, 0) = clamp8(base + disk);
        img.at(x, y, 1) = clamp8(0.6 * base + 0.5 * disk + stripes);
        img.at(x, y, 2) = clamp8(255 - base - 0.3 * disk);
      }
    }
  }
  return img;
}

RasterImage load_or_make_image(const DemoConfig& cfg, int default_w,
                               int channels) {
  auto it = cfg.str_params.find("image");
  if (it != cfg.str_params.end()) {
    std::ifstream in(it->second, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image " + it->second);
    RasterImage img = read_image(in);
    if (img.width != img.height)
      throw std::invalid_argument("demo images must be square");
    return img;
  }
  return synthetic_image(static_cast<int>(cfg.param("width", default_w)),
                         channels);
}

// pixel of a cell in the structured 2-triangles-per-pixel mesh
std::pair<int, int> cell_pixel(int cell, int w) {
  int q = cell / 2;
  return {q % w, q / w};  // (i, j) with j counted from the bottom row
}

DemoResult demo_inpaint(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  RasterImage orig = load_or_make_image(cfg, 64, 3);
  const int w = orig.width, ch = orig.channels;
  const double eta = cfg.param("eta", 0.25);

  // corruption mask (explicit arithmetic keeps it platform independent)
  std::mt19937 rng(cfg.seed);
  std::vector<char> corrupted(size_t(w) * w, 0);
  for (auto& c : corrupted)
    c = (rng() * (1.0 / 4294967296.0)) < eta ? 1 : 0;

  RasterImage damaged = orig;
  for (int y = 0; y < w; ++y)
    for (int x = 0; x < w; ++x)
      if (corrupted[size_t(y) * w + x])
        for (int c = 0; c < ch; ++c) damaged.at(x, y, c) = 0;

  auto mesh = std::make_shared<TriMesh>(unit_square_mesh(w, Diagonal::Right));
  auto V = function_space(mesh, Family::CR, 1, ch);

  // CR dof values and fidelity mask from adjacent pixels; image row 0 is the
  // top row, mesh row 0 the bottom one
  auto pixel_of_cell = [&](int cell) {
    auto [i, j] = cell_pixel(cell, w);
    return std::pair<int, int>(i, w - 1 - j);
  };
  const int nf = mesh->num_facets();
  Vec lo = Vec::Constant(V->total_dofs(), -kInf);
  Vec hi = Vec::Constant(V->total_dofs(), kInf);
  for (int f = 0; f < nf; ++f) {
    const auto& adj = mesh->facet_cells(f);
    double sum[3] = {0, 0, 0};
    int count = 0;
    bool clean = true;
    std::pair<int, int> seen[2];
    int nseen = 0;
    for (int s = 0; s < 2; ++s) {
      if (adj[s] < 0) continue;
      auto px = pixel_of_cell(adj[s]);
      bool dup = false;
      for (int t = 0; t < nseen; ++t)
        if (seen[t] == px) dup = true;
      if (dup) continue;
      seen[nseen++] = px;
      if (corrupted[size_t(px.second) * w + px.first]) clean = false;
      for (int c = 0; c < ch; ++c) sum[c] += orig.at(px.first, px.second, c);
      ++count;
    }
    if (!clean) continue;
    for (int c = 0; c < ch; ++c) {
      const int dof = V->global_dof(f, c);
      lo(dof) = hi(dof) = sum[c] / count / 255.0;
    }
  }

  BlockProblem prob("inpaint");
  BlockProblem::VarOpts opts;
  opts.lower.kind = VarBound::Field;
  opts.lower.field = lo;
  opts.upper.kind = VarBound::Field;
  opts.upper.field = hi;
  int u = prob.add_var(V, opts);

  auto centroid = quadrature_rule(QuadSpec::centroid(), QuadRule::Cell);
  for (int c = 0; c < ch; ++c) {
    ConvexTermInstance tv;
    tv.repr = make_l2norm(2, 1.0).repr;
    tv.input = grad_of(u, V, c);
    tv.quad = centroid;
    prob.add_convex_term(std::move(tv));
  }

  SolutionBundle sol = prob.optimize(ctx.solver_settings());

  // read pixels back from the diagonal facet dof of each pixel
  RasterImage restored = damaged;
  for (int q = 0; q < w * w; ++q) {
    int c0 = 2 * q, c1 = 2 * q + 1;
    const auto& cf0 = mesh->cell_facets(c0);
    int diag = -1;
    for (int k = 0; k < 3; ++k) {
      const auto& adj = mesh->facet_cells(cf0[k]);
      if (adj[0] == c1 || adj[1] == c1) diag = cf0[k];
    }
    auto px = pixel_of_cell(c0);
    for (int c = 0; c < ch; ++c) {
      double v = sol.fields[0].values(V->global_dof(diag, c));
      restored.at(px.first, px.second, c) = static_cast<std::uint8_t>(
          std::clamp<long>(std::lround(v * 255.0), 0, 255));
    }
  }

  auto dump = [&](const char* name, const RasterImage& img) {
    std::ostringstream ss;
    write_image(img, ss);
    write_file_atomic(ctx.out / name, ss.str());
  };
  dump(ch == 1 ? "original.pgm" : "original.ppm", orig);
  dump(ch == 1 ? "damaged.pgm" : "damaged.ppm", damaged);
  dump(ch == 1 ? "restored.pgm" : "restored.ppm", restored);

  double mse = 0;
  for (size_t i = 0; i < orig.samples.size(); ++i) {
    double d = double(orig.samples[i]) - double(restored.samples[i]);
    mse += d * d;
  }
  mse /= orig.samples.size();

  DemoResult r;
  r.objective = sol.objective;
  r.extras["mse"] = mse;
  r.extras["psnr"] = mse > 0 ? 10 * std::log10(255.0 * 255.0 / mse) : kInf;
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// decompose (cartoon + texture splitting with a G-norm bound)

DemoResult demo_decompose(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  RasterImage orig = load_or_make_image(cfg, 64, 1);
  if (orig.channels != 1) {
    RasterImage gray;
    gray.width = orig.width;
    gray.height = orig.height;
    gray.channels = 1;
    gray.samples.resize(size_t(orig.width) * orig.height);
    for (int y = 0; y < orig.height; ++y)
      for (int x = 0; x < orig.width; ++x)
        gray.at(x, y) = static_cast<std::uint8_t>(
            (int(orig.at(x, y, 0)) + orig.at(x, y, 1) + orig.at(x, y, 2)) / 3);
    orig = std::move(gray);
  }
  const int w = orig.width;
  const double alpha = cfg.param("alpha", 2e-3);

  auto mesh = std::make_shared<TriMesh>(unit_square_mesh(w, Diagonal::Right));
  auto Vu = function_space(mesh, Family::CR, 1);
  auto Vg = function_space(mesh, Family::RT, 1);

  auto pixel_of_cell = [&](int cell) {
    auto [i, j] = cell_pixel(cell, w);
    return std::pair<int, int>(i, w - 1 - j);
  };
  Vec yvals(Vu->total_dofs());
  for (int f = 0; f < mesh->num_facets(); ++f) {
    const auto& adj = mesh->facet_cells(f);
    double sum = 0;
    int count = 0;
    std::pair<int, int> seen[2];
    int nseen = 0;
    for (int s = 0; s < 2; ++s) {
      if (adj[s] < 0) continue;
      auto px = pixel_of_cell(adj[s]);
      bool dup = false;
      for (int t = 0; t < nseen; ++t)
        if (seen[t] == px) dup = true;
      if (dup) continue;
      seen[nseen++] = px;
      sum += orig.at(px.first, px.second) / 255.0;
      ++count;
    }
    yvals(f) = sum / count;
  }
  DiscreteField y{Vu, yvals};

  BlockProblem prob("decompose");
  int u = prob.add_var(Vu);
  int g = prob.add_var(Vg);

  auto gauss2 = quadrature_rule(QuadSpec::gauss(2), QuadRule::Cell);
  prob.add_eq_constraint(Vu, {value_of(u, Vu), div_of(g, Vg)},
                         BlockProblem::Rhs::of_form(field_value_of(y)),
                         Measure::cells(), gauss2);

  auto centroid = quadrature_rule(QuadSpec::centroid(), QuadRule::Cell);
  ConvexTermInstance tv;
  tv.repr = make_l2norm(2, 1.0).repr;
  tv.input = grad_of(u, Vu);
  tv.quad = centroid;
  prob.add_convex_term(std::move(tv));

  ConvexTermInstance ball;
  ball.repr = make_l2ball(2, alpha).repr;
  ball.input = value_of(g, Vg);
  ball.quad = quadrature_rule(QuadSpec::vertex(), QuadRule::Cell);
  prob.add_convex_term(std::move(ball));

  SolutionBundle sol = prob.optimize(ctx.solver_settings());

  RasterImage cartoon = orig, texture = orig;
  for (int q = 0; q < w * w; ++q) {
    int c0 = 2 * q, c1 = 2 * q + 1;
    const auto& cf0 = mesh->cell_facets(c0);
    int diag = -1;
    for (int k = 0; k < 3; ++k) {
      const auto& adj = mesh->facet_cells(cf0[k]);
      if (adj[0] == c1 || adj[1] == c1) diag = cf0[k];
    }
    auto px = pixel_of_cell(c0);
    double uv = sol.fields[0].values(diag);
    double tv_val = yvals(diag) - uv;
    cartoon.at(px.first, px.second) = static_cast<std::uint8_t>(
        std::clamp<long>(std::lround(uv * 255.0), 0, 255));
    texture.at(px.first, px.second) = static_cast<std::uint8_t>(
        std::clamp<long>(std::lround(128.0 + tv_val * 255.0), 0, 255));
  }
  auto dump = [&](const char* name, const RasterImage& img) {
    std::ostringstream ss;
    write_image(img, ss);
    write_file_atomic(ctx.out / name, ss.str());
  };
  dump("cartoon.pgm", cartoon);
  dump("texture.pgm", texture);

  DemoResult r;
  r.objective = sol.objective;
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// sandpile (Prigozhin evolution by successive projections)

DemoResult demo_sandpile(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto mesh = demo_mesh(cfg);
  auto V = function_space(mesh, Family::CG, 1);
  const double alpha_deg = cfg.param("alpha", 30.0);
  const double tana = std::tan(alpha_deg * M_PI / 180.0);
  const int steps = static_cast<int>(cfg.param("steps", 10));
  const double dt = cfg.param("dt", 0.025);
  const double source = cfg.param("f", 0.0);

  // unstable pyramid: twice the admissible slope
  DiscreteField h = interpolate_scalar(V, [tana](const Vec2& x) {
    double d = std::min({x(0), x(1), 1 - x(0), 1 - x(1)});
    return 2.0 * tana * d;
  });

  BlockProblem prob("sandpile");
  BlockProblem::VarOpts opts;
  opts.dirichlet = {DirichletBC::constant(0, 0.0)};
  int hvar = prob.add_var(V, opts);

  DiscreteField g{V, h.values.array() + dt * source};
  ConvexTermInstance fit;
  fit.repr = make_quadratic(Eigen::MatrixXd::Identity(1, 1), Vec::Zero(1)).repr;
  fit.input = value_of(hvar, V) - field_value_of(g);
  fit.quad = quadrature_rule(QuadSpec::gauss(2), QuadRule::Cell);
  int fit_id = prob.add_convex_term(std::move(fit));

  ConvexTermInstance cap;
  cap.repr = make_l2ball(2, tana).repr;
  cap.input = grad_of(hvar, V);
  cap.quad = quadrature_rule(QuadSpec::centroid(), QuadRule::Cell);
  prob.add_convex_term(std::move(cap));

  prob.assemble();

  std::ostringstream hist;
  hist << "step,t,objective,total_height,max_slope\n";
  auto total_height = [&](const DiscreteField& field) {
    double sum = 0;
    for (int c = 0; c < mesh->num_cells(); ++c) {
      const auto& cv = mesh->cell(c);
      sum += mesh->cell_area(c) / 3.0 *
             (field.values(cv[0]) + field.values(cv[1]) + field.values(cv[2]));
    }
    return sum;
  };
  auto max_slope = [&](const DiscreteField& field) {
    double worst = 0;
    AffineFieldExpr gexpr = grad_of(hvar, V);
    for (int c = 0; c < mesh->num_cells(); ++c) {
      ExprRows rows = eval_expr_rows(
          gexpr, CellPoint{c, Eigen::Vector3d(1. / 3, 1. / 3, 1. / 3)});
      Vec local(rows.blocks[0].cols.size());
      for (size_t j = 0; j < rows.blocks[0].cols.size(); ++j)
        local(j) = field.values(rows.blocks[0].cols[j]);
      worst = std::max(worst, (rows.blocks[0].coeffs * local).norm());
    }
    return worst;
  };

  ctx.write_vtk_file("sandpile_0.vtk", *mesh, {{"h", h}});
  DemoResult r;
  SolutionBundle sol;
  for (int step = 1; step <= steps; ++step) {
    g.values = h.values.array() + dt * source;
    prob.rebind_term_field(fit_id, g.values);
    sol = prob.optimize(ctx.solver_settings());
    if (sol.status != SolveStatus::Optimal) break;
    h = sol.fields[0];
    hist << step << ',' << fmt(step * dt) << ',' << fmt(sol.objective) << ','
         << fmt(total_height(h)) << ',' << fmt(max_slope(h)) << '\n';
    ctx.write_vtk_file("sandpile_" + std::to_string(step) + ".vtk", *mesh,
                       {{"h", h}});
  }
  write_file_atomic(ctx.out / "steps.csv", hist.str());
  r.objective = sol.objective;
  r.extras["max_slope"] = max_slope(h);
  r.extras["total_height"] = total_height(h);
  return ctx.finish(prob, sol, r);
}

// ---------------------------------------------------------------------------
// transport (dynamic optimal transport, one space dimension plus time)

DemoResult demo_transport(const DemoContext& ctx) {
  const auto& cfg = ctx.cfg;
  auto mesh = demo_mesh(cfg);
  auto V = function_space(mesh, Family::CG, 2, 2);  // (rho, m), y axis is time
  const double eps = cfg.param("eps", 1e-6);
  const double sigma = cfg.param("sigma", 0.08);
  const double x0 = cfg.param("x0", 0.25), x1 = cfg.param("x1", 0.75);
  const double amp = cfg.param("amp", 1.0);

  auto bump = [sigma, amp](double center, double x) {
    double t = (x - center) / sigma;
    return amp * std::exp(-t * t);
  };

  BlockProblem prob("transport");
  BlockProblem::VarOpts opts;
  opts.dirichlet = {
      {kBottom, 0, [&, x0](const Vec2& x) { return bump(x0, x(0)); }},
      {kTop, 0, [&, x1](const Vec2& x) { return bump(x1, x(0)); }},
      DirichletBC::constant(kLeft, 0.0, 1),
      DirichletBC::constant(kRight, 0.0, 1)};
  int u = prob.add_var(V, opts);

  auto gauss2 = quadrature_rule(QuadSpec::gauss(2), QuadRule::Cell);
  ConvexTermInstance cost;
  cost.repr = make_transport_cost(1).repr;
  cost.input = value_of(u, V);
  cost.quad = gauss2;
  prob.add_convex_term(std::move(cost));

  ConvexTermInstance conserv;
  conserv.repr = make_pointwise_inequality(Vec::Constant(1, -eps),
                                           Vec::Constant(1, eps)).repr;
  conserv.input = partial_of(u, V, 0, 1) + partial_of(u, V, 1, 0);
  conserv.quad = gauss2;
  prob.add_convex_term(std::move(conserv));

  SolutionBundle sol = prob.optimize(ctx.solver_settings());
  const DiscreteField& uh = sol.fields[0];

  // line masses: integral of rho over x at fixed times
  std::ostringstream csv;
  csv << "t,mass\n";
  const int lines = cfg.n;
  const int ns = 4 * cfg.n;
  for (int j = 0; j <= lines; ++j) {
    double t = double(j) / lines;
    t = std::min(std::max(t, 1e-9), 1 - 1e-9);
    double mass = 0;
    for (int i = 0; i < ns; ++i) {
      Vec2 x((i + 0.5) / ns, t);
      Eigen::Vector3d bary;
      int c = locate_cell(*mesh, x, &bary);
      if (c >= 0) mass += uh.eval(c, bary)(0) / ns;
    }
    csv << fmt(double(j) / lines) << ',' << fmt(mass) << '\n';
  }
  write_file_atomic(ctx.out / "line_masses.csv", csv.str());
  ctx.write_vtk_file("transport.vtk", *mesh, {{"rho_m", uh}});

  DemoResult r;
  r.objective = sol.objective;
  return ctx.finish(prob, sol, r);
}

}  // namespace

const std::vector<std::string>& demo_names() {
  static const std::vector<std::string> names = {
      "obstacle",  "cheeger",   "plate",    "viscoplastic",
      "inpaint",   "decompose", "sandpile", "transport"};
  return names;
}

DemoResult run_demo(const DemoConfig& config) {
  DemoContext ctx(config);
  if (config.demo == "obstacle") return demo_obstacle(ctx);
  if (config.demo == "cheeger") return demo_cheeger(ctx);
  if (config.demo == "plate") return demo_plate(ctx);
  if (config.demo == "viscoplastic") return demo_viscoplastic(ctx);
  if (config.demo == "inpaint") return demo_inpaint(ctx);
  if (config.demo == "decompose") return demo_decompose(ctx);
  if (config.demo == "sandpile") return demo_sandpile(ctx);
  if (config.demo == "transport") return demo_transport(ctx);
  throw std::invalid_argument("unknown demo '" + config.demo + "'");
}

int run_demo_cli(const DemoConfig& config) {
  try {
    DemoResult r = run_demo(config);
    return r.status == SolveStatus::Optimal ? 0 : 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 4;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid config: %s\n", e.what());
    return 3;
  } catch (const std::runtime_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  }
}

}  // namespace convexfem
