#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "convexfem/mesh.hpp"

using namespace convexfem;

TEST_CASE("unit square counts") {
  TriMesh m1 = unit_square_mesh(1, Diagonal::Right);
  CHECK(m1.num_cells() == 2);
  CHECK(m1.num_vertices() == 4);
  CHECK(m1.num_facets() == 5);

  TriMesh mc = unit_square_mesh(1, Diagonal::Crossed);
  CHECK(mc.num_cells() == 4);
  CHECK(mc.num_vertices() == 5);
  CHECK(mc.num_facets() == 8);

  TriMesh big = unit_square_mesh(25, Diagonal::Crossed);
  CHECK(big.num_cells() == 2500);
  CHECK(big.total_area() == doctest::Approx(1.0).epsilon(1e-12));

  TriMesh ml = unit_square_mesh(3, Diagonal::Left);
  CHECK(ml.num_cells() == 18);
  CHECK(ml.num_vertices() == 16);

  CHECK_THROWS_AS(unit_square_mesh(0), std::invalid_argument);
}

TEST_CASE("facet adjacency and boundary markers") {
  TriMesh m = unit_square_mesh(1, Diagonal::Right);
  int boundary = 0, interior = 0;
  for (int f = 0; f < m.num_facets(); ++f) {
    if (m.is_boundary_facet(f)) {
      ++boundary;
      CHECK(m.boundary_marker(f) >= kBottom);
      CHECK(m.facet_cells(f)[1] == -1);
    } else {
      ++interior;
      CHECK(m.boundary_marker(f) == kInterior);
    }
  }
  CHECK(boundary == 4);
  CHECK(interior == 1);

  TriMesh m2 = unit_square_mesh(2, Diagonal::Left);
  CHECK(static_cast<int>(m2.boundary_facets().size()) == 8);

  // markers cover all four sides
  int seen[5] = {0, 0, 0, 0, 0};
  for (int f : m2.boundary_facets()) seen[m2.boundary_marker(f)]++;
  CHECK(seen[kBottom] == 2);
  CHECK(seen[kRight] == 2);
  CHECK(seen[kTop] == 2);
  CHECK(seen[kLeft] == 2);
}

TEST_CASE("degenerate inputs") {
  std::vector<Eigen::Vector2d> pts = {{0, 0}, {1, 0}, {0, 1}};
  CHECK_THROWS_AS(TriMesh(pts, {{0, 1, 2}, {0, 1, 2}}), MeshError);
  CHECK_THROWS_AS(TriMesh(pts, {{0, 1, 1}}), MeshError);
  std::vector<Eigen::Vector2d> line = {{0, 0}, {1, 0}, {2, 0}};
  CHECK_THROWS_AS(TriMesh(line, {{0, 1, 2}}), MeshError);
}

TEST_CASE("cell geometry") {
  TriMesh m = unit_square_mesh(1, Diagonal::Right);
  for (int c = 0; c < m.num_cells(); ++c)
    CHECK(m.cell_geometry(c).area == doctest::Approx(0.5));
  TriMesh mc = unit_square_mesh(1, Diagonal::Crossed);
  for (int c = 0; c < mc.num_cells(); ++c)
    CHECK(mc.cell_geometry(c).area == doctest::Approx(0.25));

  // gradient transform maps reference gradients of the affine map correctly
  auto g = m.cell_geometry(0);
  Eigen::Matrix2d id = g.grad_transform.transpose() * g.jacobian;
  CHECK(id.isApprox(Eigen::Matrix2d::Identity(), 1e-14));
}

TEST_CASE("facet geometry") {
  TriMesh m = unit_square_mesh(4, Diagonal::Right);
  for (int f : m.boundary_facets()) {
    auto g = m.facet_geometry(f);
    CHECK(g.length == doctest::Approx(0.25));
    CHECK(g.normal.norm() == doctest::Approx(1.0));
    if (m.boundary_marker(f) == kBottom) {
      CHECK(g.normal.x() == doctest::Approx(0.0));
      CHECK(g.normal.y() == doctest::Approx(-1.0));
    }
  }
  TriMesh m1 = unit_square_mesh(1, Diagonal::Right);
  for (int f : m1.interior_facets())
    CHECK(m1.facet_geometry(f).length == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("interior facet normals oppose") {
  TriMesh m = unit_square_mesh(3, Diagonal::Crossed);
  for (int f : m.interior_facets()) {
    auto g = m.facet_geometry(f);
    // normal out of cell 0 must point into cell 1
    Eigen::Vector2d to_c1 = m.cell_centroid(m.facet_cells(f)[1]) - g.midpoint;
    CHECK(g.normal.dot(to_c1) > 0.0);
  }
}

TEST_CASE("area sums to domain area") {
  for (auto d : {Diagonal::Left, Diagonal::Right, Diagonal::Crossed}) {
    TriMesh m = unit_square_mesh(7, d);
    CHECK(m.total_area() == doctest::Approx(1.0).epsilon(1e-12));
    // Euler relation for a simply connected mesh
    CHECK(m.num_vertices() - m.num_facets() + m.num_cells() == 1);
  }
}

TEST_CASE("deterministic facet ordering") {
  TriMesh a = unit_square_mesh(5, Diagonal::Crossed);
  TriMesh b = unit_square_mesh(5, Diagonal::Crossed);
  REQUIRE(a.num_facets() == b.num_facets());
  for (int f = 0; f < a.num_facets(); ++f) {
    CHECK(a.facet(f) == b.facet(f));
    CHECK(a.facet_cells(f) == b.facet_cells(f));
  }
}

TEST_CASE("mesh text roundtrip") {
  TriMesh m = unit_square_mesh(2, Diagonal::Crossed);
  std::stringstream ss;
  write_mesh(m, ss);
  TriMesh back = read_mesh(ss);
  REQUIRE(back.num_vertices() == m.num_vertices());
  REQUIRE(back.num_cells() == m.num_cells());
  for (int v = 0; v < m.num_vertices(); ++v)
    CHECK(back.vertex(v) == m.vertex(v));
  for (int c = 0; c < m.num_cells(); ++c) CHECK(back.cell(c) == m.cell(c));
}

TEST_CASE("mesh parse errors carry line numbers") {
  std::stringstream bad("4 2\n0 0\n1 0\n1 1\n0 1\n0 1 2\n0 2 9\n");
  CHECK_THROWS_WITH_AS(read_mesh(bad), doctest::Contains("line 7"), ParseError);
  std::stringstream short_file("4 2\n0 0\n");
  CHECK_THROWS_AS(read_mesh(short_file), ParseError);
}

TEST_CASE("simple square file equals generated mesh") {
  std::stringstream ss("4 2\n0 0\n1 0\n0 1\n1 1\n0 1 3\n0 3 2\n");
  TriMesh m = read_mesh(ss);
  CHECK(m.num_cells() == 2);
  CHECK(m.num_facets() == 5);
  CHECK(m.total_area() == doctest::Approx(1.0));
}
