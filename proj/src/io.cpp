#include "convexfem/io.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

namespace convexfem {

namespace {

std::string fmt17(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_bound(const std::string& tok) {
  if (tok == "inf") return kInf;
  if (tok == "-inf") return -kInf;
  return std::stod(tok);
}

int skip_ws_and_comments(std::istream& in) {
  // PNM headers allow '#' comments between tokens
  int c;
  while ((c = in.peek()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  return c;
}

int read_pnm_int(std::istream& in) {
  skip_ws_and_comments(in);
  int v;
  if (!(in >> v)) throw ParseError("malformed image header");
  return v;
}

const char* cone_name(ConeKind kind) {
  switch (kind) {
    case ConeKind::Free: return "FREE";
    case ConeKind::NonNeg: return "NONNEG";
    case ConeKind::Quad: return "QUAD";
    case ConeKind::RQuad: return "RQUAD";
  }
  return "?";
}

ConeKind parse_cone(const std::string& name) {
  if (name == "FREE") return ConeKind::Free;
  if (name == "NONNEG") return ConeKind::NonNeg;
  if (name == "QUAD") return ConeKind::Quad;
  if (name == "RQUAD") return ConeKind::RQuad;
  throw ParseError("unknown cone kind '" + name + "'");
}

}  // namespace

RasterImage read_image(std::istream& in) {
  std::string magic;
  in >> magic;
  if (magic != "P5" && magic != "P6") throw ParseError("expected P5 or P6");
  RasterImage img;
  img.channels = magic == "P5" ? 1 : 3;
  img.width = read_pnm_int(in);
  img.height = read_pnm_int(in);
  int maxval = read_pnm_int(in);
  if (maxval != 255) throw ParseError("only maxval 255 is supported");
  if (img.width <= 0 || img.height <= 0) throw ParseError("bad image size");
  in.get();  // single whitespace after maxval
  img.samples.resize(size_t(img.width) * img.height * img.channels);
  in.read(reinterpret_cast<char*>(img.samples.data()), img.samples.size());
  if (in.gcount() != static_cast<std::streamsize>(img.samples.size()))
    throw ParseError("truncated image payload");
  return img;
}

void write_image(const RasterImage& img, std::ostream& out) {
  if (img.channels != 1 && img.channels != 3)
    throw std::invalid_argument("image must have 1 or 3 channels");
  out << (img.channels == 1 ? "P5" : "P6") << '\n'
      << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.samples.data()),
            img.samples.size());
}

void write_vtk(const TriMesh& mesh, const std::vector<NamedField>& fields,
               std::ostream& out) {
  std::set<std::string> names;
  for (const auto& nf : fields)
    if (!names.insert(nf.name).second)
      throw std::invalid_argument("duplicate VTK field name '" + nf.name + "'");

  out << "# vtk DataFile Version 3.0\nconvexfem output\nASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.num_vertices() << " double\n";
  for (int v = 0; v < mesh.num_vertices(); ++v)
    out << fmt17(mesh.vertex(v).x()) << ' ' << fmt17(mesh.vertex(v).y())
        << " 0\n";
  out << "CELLS " << mesh.num_cells() << ' ' << 4 * mesh.num_cells() << '\n';
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cell = mesh.cell(c);
    out << "3 " << cell[0] << ' ' << cell[1] << ' ' << cell[2] << '\n';
  }
  out << "CELL_TYPES " << mesh.num_cells() << '\n';
  for (int c = 0; c < mesh.num_cells(); ++c) out << "5\n";

  auto is_point_field = [](const DiscreteField& f) {
    return f.space->family() == Family::CG && f.space->degree() == 1;
  };

  bool point_header = false, cell_header = false;
  for (const auto& nf : fields) {
    if (!is_point_field(nf.field)) continue;
    if (!point_header) {
      out << "POINT_DATA " << mesh.num_vertices() << '\n';
      point_header = true;
    }
    const int vd = nf.field.space->value_dim();
    if (vd == 1) {
      out << "SCALARS " << nf.name << " double 1\nLOOKUP_TABLE default\n";
      for (int v = 0; v < mesh.num_vertices(); ++v)
        out << fmt17(nf.field.values(v)) << '\n';
    } else {
      out << "VECTORS " << nf.name << " double\n";
      for (int v = 0; v < mesh.num_vertices(); ++v) {
        for (int c = 0; c < vd; ++c)
          out << fmt17(nf.field.values(v * vd + c)) << ' ';
        for (int c = vd; c < 3; ++c) out << "0 ";
        out << '\n';
      }
    }
  }
  for (const auto& nf : fields) {
    if (is_point_field(nf.field)) continue;
    if (!cell_header) {
      out << "CELL_DATA " << mesh.num_cells() << '\n';
      cell_header = true;
    }
    const int vd = nf.field.space->value_dim();
    const Eigen::Vector3d centroid(1.0 / 3, 1.0 / 3, 1.0 / 3);
    if (vd == 1) {
      out << "SCALARS " << nf.name << " double 1\nLOOKUP_TABLE default\n";
      for (int c = 0; c < mesh.num_cells(); ++c)
        out << fmt17(nf.field.eval(c, centroid)(0)) << '\n';
    } else {
      out << "VECTORS " << nf.name << " double\n";
      for (int c = 0; c < mesh.num_cells(); ++c) {
        Eigen::VectorXd v = nf.field.eval(c, centroid);
        for (int k = 0; k < vd; ++k) out << fmt17(v(k)) << ' ';
        for (int k = vd; k < 3; ++k) out << "0 ";
        out << '\n';
      }
    }
  }
}

void export_program(const StandardConicProgram& program, std::ostream& out) {
  out << "VARS " << program.num_vars() << '\n';
  out << "SENSE " << (program.maximize ? "MAX" : "MIN") << '\n';
  out << "OFFSET " << fmt17(program.cost_offset) << '\n';
  int obj_nnz = 0;
  for (int i = 0; i < program.num_vars(); ++i)
    if (program.cost(i) != 0.0) ++obj_nnz;
  out << "OBJ " << obj_nnz << '\n';
  for (int i = 0; i < program.num_vars(); ++i)
    if (program.cost(i) != 0.0)
      out << i << ' ' << fmt17(program.cost(i)) << '\n';
  int nbounds = 0;
  for (int i = 0; i < program.num_vars(); ++i)
    if (program.var_lower(i) != -kInf || program.var_upper(i) != kInf)
      ++nbounds;
  out << "BOUNDS " << nbounds << '\n';
  for (int i = 0; i < program.num_vars(); ++i)
    if (program.var_lower(i) != -kInf || program.var_upper(i) != kInf)
      out << i << ' ' << fmt17(program.var_lower(i)) << ' '
          << fmt17(program.var_upper(i)) << '\n';
  out << "CONES " << program.cones.size() << '\n';
  for (const auto& seg : program.cones)
    out << cone_name(seg.cone.kind) << ' ' << seg.start << ' ' << seg.cone.dim
        << '\n';
  out << "ROWS " << program.num_rows() << ' ' << program.A.nonZeros() << '\n';
  for (int k = 0; k < program.A.outerSize(); ++k)
    for (Eigen::SparseMatrix<double>::InnerIterator it(program.A, k); it; ++it)
      out << it.row() << ' ' << it.col() << ' ' << fmt17(it.value()) << '\n';
  out << "RBOUNDS " << program.num_rows() << '\n';
  for (int r = 0; r < program.num_rows(); ++r)
    out << fmt17(program.row_lower(r)) << ' ' << fmt17(program.row_upper(r))
        << '\n';
}

StandardConicProgram import_program(std::istream& in) {
  auto expect = [&in](const char* key) {
    std::string tok;
    if (!(in >> tok) || tok != key)
      throw ParseError(std::string("expected section '") + key + "'");
  };
  StandardConicProgram p;
  long long n, k;
  expect("VARS");
  in >> n;
  std::string sense;
  expect("SENSE");
  in >> sense;
  p.maximize = sense == "MAX";
  expect("OFFSET");
  std::string tok;
  in >> tok;
  p.cost_offset = parse_bound(tok);
  p.cost = Eigen::VectorXd::Zero(n);
  p.var_lower = Eigen::VectorXd::Constant(n, -kInf);
  p.var_upper = Eigen::VectorXd::Constant(n, kInf);
  expect("OBJ");
  in >> k;
  for (long long i = 0; i < k; ++i) {
    long long idx;
    in >> idx >> tok;
    p.cost(idx) = parse_bound(tok);
  }
  expect("BOUNDS");
  in >> k;
  for (long long i = 0; i < k; ++i) {
    long long idx;
    std::string lo, hi;
    in >> idx >> lo >> hi;
    p.var_lower(idx) = parse_bound(lo);
    p.var_upper(idx) = parse_bound(hi);
  }
  expect("CONES");
  in >> k;
  for (long long i = 0; i < k; ++i) {
    std::string kind;
    int start, dim;
    in >> kind >> start >> dim;
    p.cones.push_back({Cone{parse_cone(kind), dim}, start});
  }
  long long m, nnz;
  expect("ROWS");
  in >> m >> nnz;
  std::vector<Eigen::Triplet<double>> ts;
  ts.reserve(nnz);
  for (long long i = 0; i < nnz; ++i) {
    long long r, c;
    in >> r >> c >> tok;
    ts.emplace_back(r, c, parse_bound(tok));
  }
  p.A.resize(m, n);
  p.A.setFromTriplets(ts.begin(), ts.end());
  p.row_lower.resize(m);
  p.row_upper.resize(m);
  expect("RBOUNDS");
  in >> k;
  for (long long r = 0; r < m; ++r) {
    std::string lo, hi;
    in >> lo >> hi;
    p.row_lower(r) = parse_bound(lo);
    p.row_upper(r) = parse_bound(hi);
  }
  if (!in) throw ParseError("truncated program file");
  p.validate();
  return p;
}

void write_file_atomic(const std::filesystem::path& path,
                       const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string());
    out.write(content.data(), content.size());
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace convexfem
