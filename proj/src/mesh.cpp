#include "convexfem/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace convexfem {

namespace {

double signed_area(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const Eigen::Vector2d& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                (c.x() - a.x()) * (b.y() - a.y()));
}

constexpr double kSideTol = 1e-12;

}  // namespace

TriMesh::TriMesh(std::vector<Eigen::Vector2d> vertices,
                 std::vector<std::array<int, 3>> cells)
    : vertices_(std::move(vertices)), cells_(std::move(cells)) {
  const int nv = num_vertices();
  for (auto& cell : cells_) {
    for (int v : cell) {
      if (v < 0 || v >= nv) throw MeshError("cell vertex index out of range");
    }
    if (cell[0] == cell[1] || cell[1] == cell[2] || cell[0] == cell[2])
      throw MeshError("cell with repeated vertex");
    double area = signed_area(vertices_[cell[0]], vertices_[cell[1]],
                              vertices_[cell[2]]);
    if (area == 0.0) throw MeshError("degenerate (zero-area) cell");
    if (area < 0.0) std::swap(cell[1], cell[2]);
  }
  cell_area_.reserve(cells_.size());
  for (const auto& cell : cells_) {
    double area = signed_area(vertices_[cell[0]], vertices_[cell[1]],
                              vertices_[cell[2]]);
    cell_area_.push_back(area);
    total_area_ += area;
  }
  build_facets();
  classify_boundary();
}

void TriMesh::build_facets() {
  // Facets keyed by sorted vertex pair, numbered in first-encounter order so
  // identical input always yields identical facet ids.
  std::map<std::array<int, 2>, int> index;
  cell_facets_.assign(cells_.size(), {-1, -1, -1});
  // Ordered (ccw) edge of each cell, used to detect same-side duplicates.
  std::vector<std::array<int, 2>> seen_oriented;
  for (int c = 0; c < num_cells(); ++c) {
    const auto& cell = cells_[c];
    for (int k = 0; k < 3; ++k) {
      // local facet k is opposite local vertex k
      int a = cell[(k + 1) % 3];
      int b = cell[(k + 2) % 3];
      std::array<int, 2> key{std::min(a, b), std::max(a, b)};
      auto [it, inserted] = index.try_emplace(key, num_facets());
      if (inserted) {
        facets_.push_back(key);
        facet_cells_.push_back({c, -1});
        seen_oriented.push_back({a, b});
      } else {
        int f = it->second;
        if (facet_cells_[f][1] >= 0)
          throw MeshError("non-manifold facet with more than 2 cells");
        if (seen_oriented[f][0] == a && seen_oriented[f][1] == b)
          throw MeshError("duplicate or inconsistently oriented cell");
        facet_cells_[f][1] = c;
      }
      cell_facets_[c][k] = index[key];
    }
  }
  for (int f = 0; f < num_facets(); ++f) {
    if (facet_cells_[f][1] < 0)
      boundary_facets_.push_back(f);
    else
      interior_facets_.push_back(f);
  }
}

void TriMesh::classify_boundary() {
  facet_marker_.assign(num_facets(), kInterior);
  for (int f : boundary_facets_) {
    const Eigen::Vector2d a = vertices_[facets_[f][0]];
    const Eigen::Vector2d b = vertices_[facets_[f][1]];
    int marker = kGenericBoundary;
    if (std::abs(a.y()) < kSideTol && std::abs(b.y()) < kSideTol)
      marker = kBottom;
    else if (std::abs(a.x() - 1.0) < kSideTol && std::abs(b.x() - 1.0) < kSideTol)
      marker = kRight;
    else if (std::abs(a.y() - 1.0) < kSideTol && std::abs(b.y() - 1.0) < kSideTol)
      marker = kTop;
    else if (std::abs(a.x()) < kSideTol && std::abs(b.x()) < kSideTol)
      marker = kLeft;
    facet_marker_[f] = marker;
  }
}

Eigen::Vector2d TriMesh::cell_centroid(int c) const {
  const auto& cell = cells_[c];
  return (vertices_[cell[0]] + vertices_[cell[1]] + vertices_[cell[2]]) / 3.0;
}

TriMesh::CellGeometry TriMesh::cell_geometry(int c) const {
  if (c < 0 || c >= num_cells()) throw std::invalid_argument("bad cell id");
  const auto& cell = cells_[c];
  const Eigen::Vector2d& p0 = vertices_[cell[0]];
  CellGeometry g;
  g.origin = p0;
  g.jacobian.col(0) = vertices_[cell[1]] - p0;
  g.jacobian.col(1) = vertices_[cell[2]] - p0;
  g.area = 0.5 * g.jacobian.determinant();
  if (!(g.area > 0.0)) throw MeshError("degenerate (zero-area) cell");
  g.grad_transform = g.jacobian.inverse().transpose();
  return g;
}

TriMesh::FacetGeometry TriMesh::facet_geometry(int f) const {
  if (f < 0 || f >= num_facets()) throw std::invalid_argument("bad facet id");
  const Eigen::Vector2d a = vertices_[facets_[f][0]];
  const Eigen::Vector2d b = vertices_[facets_[f][1]];
  FacetGeometry g;
  g.length = (b - a).norm();
  g.midpoint = 0.5 * (a + b);
  g.tangent = (b - a) / g.length;
  g.normal = Eigen::Vector2d(g.tangent.y(), -g.tangent.x());
  // orient out of the first adjacent cell
  if (g.normal.dot(g.midpoint - cell_centroid(facet_cells_[f][0])) < 0.0)
    g.normal = -g.normal;
  return g;
}

Eigen::Vector2d TriMesh::facet_oriented_normal(int f) const {
  const Eigen::Vector2d a = vertices_[facets_[f][0]];
  const Eigen::Vector2d b = vertices_[facets_[f][1]];
  Eigen::Vector2d t = (b - a).normalized();
  return {t.y(), -t.x()};
}

TriMesh unit_square_mesh(int n, Diagonal diagonal) {
  if (n < 1) throw std::invalid_argument("unit_square_mesh requires n >= 1");
  std::vector<Eigen::Vector2d> vertices;
  vertices.reserve((n + 1) * (n + 1) + (diagonal == Diagonal::Crossed ? n * n : 0));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      vertices.emplace_back(double(i) / n, double(j) / n);
  auto vid = [n](int i, int j) { return j * (n + 1) + i; };

  std::vector<std::array<int, 3>> cells;
  if (diagonal == Diagonal::Crossed) {
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        vertices.emplace_back((i + 0.5) / n, (j + 0.5) / n);
    auto cid = [n](int i, int j) { return (n + 1) * (n + 1) + j * n + i; };
    cells.reserve(4 * n * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        int v00 = vid(i, j), v10 = vid(i + 1, j);
        int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
        int c = cid(i, j);
        cells.push_back({v00, v10, c});
        cells.push_back({v10, v11, c});
        cells.push_back({v11, v01, c});
        cells.push_back({v01, v00, c});
      }
    }
  } else {
    cells.reserve(2 * n * n);
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) {
        int v00 = vid(i, j), v10 = vid(i + 1, j);
        int v01 = vid(i, j + 1), v11 = vid(i + 1, j + 1);
        if (diagonal == Diagonal::Right) {
          cells.push_back({v00, v10, v11});
          cells.push_back({v00, v11, v01});
        } else {
          cells.push_back({v00, v10, v01});
          cells.push_back({v10, v11, v01});
        }
      }
    }
  }
  return TriMesh(std::move(vertices), std::move(cells));
}

Diagonal parse_diagonal(const std::string& name) {
  if (name == "left") return Diagonal::Left;
  if (name == "right") return Diagonal::Right;
  if (name == "crossed") return Diagonal::Crossed;
  throw std::invalid_argument("unknown diagonal '" + name + "'");
}

TriMesh read_mesh(std::istream& in) {
  std::string line;
  int lineno = 0;
  auto next_line = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) return true;
    }
    return false;
  };
  auto fail = [&](const std::string& what) {
    throw ParseError("mesh parse error at line " + std::to_string(lineno) +
                     ": " + what);
  };

  if (!next_line()) fail("missing header");
  std::istringstream header(line);
  long long nv = -1, ne = -1;
  if (!(header >> nv >> ne) || nv < 3 || ne < 1) fail("expected 'V E' header");

  std::vector<Eigen::Vector2d> vertices;
  vertices.reserve(nv);
  for (long long i = 0; i < nv; ++i) {
    if (!next_line()) fail("unexpected end of file in vertex list");
    std::istringstream ss(line);
    double x, y;
    if (!(ss >> x >> y)) fail("expected 'x y'");
    vertices.emplace_back(x, y);
  }
  std::vector<std::array<int, 3>> cells;
  cells.reserve(ne);
  for (long long i = 0; i < ne; ++i) {
    if (!next_line()) fail("unexpected end of file in cell list");
    std::istringstream ss(line);
    long long a, b, c;
    if (!(ss >> a >> b >> c)) fail("expected 'i j k'");
    if (a < 0 || b < 0 || c < 0 || a >= nv || b >= nv || c >= nv)
      fail("vertex index out of range");
    cells.push_back({int(a), int(b), int(c)});
  }
  return TriMesh(std::move(vertices), std::move(cells));
}

void write_mesh(const TriMesh& mesh, std::ostream& out) {
  char buf[64];
  out << mesh.num_vertices() << ' ' << mesh.num_cells() << '\n';
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g", mesh.vertex(v).x(),
                  mesh.vertex(v).y());
    out << buf << '\n';
  }
  for (int c = 0; c < mesh.num_cells(); ++c) {
    const auto& cell = mesh.cell(c);
    out << cell[0] << ' ' << cell[1] << ' ' << cell[2] << '\n';
  }
}

}  // namespace convexfem
