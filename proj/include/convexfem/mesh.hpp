#ifndef CONVEXFEM_MESH_HPP
#define CONVEXFEM_MESH_HPP

#include <array>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace convexfem {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Boundary region ids on the unit square. Facets of imported meshes that do
/// not lie on a unit-square side get kGenericBoundary.
enum BoundaryRegion : int {
  kInterior = 0,
  kBottom = 1,
  kRight = 2,
  kTop = 3,
  kLeft = 4,
  kGenericBoundary = 9,
};

enum class Diagonal { Left, Right, Crossed };

/// 2D triangular mesh with facet connectivity. Cells are stored
/// counter-clockwise (positive signed area). Immutable after construction.
class TriMesh {
 public:
  TriMesh(std::vector<Eigen::Vector2d> vertices,
          std::vector<std::array<int, 3>> cells);

  int num_vertices() const { return static_cast<int>(vertices_.size()); }
  int num_cells() const { return static_cast<int>(cells_.size()); }
  int num_facets() const { return static_cast<int>(facets_.size()); }

  const Eigen::Vector2d& vertex(int v) const { return vertices_[v]; }
  const std::array<int, 3>& cell(int c) const { return cells_[c]; }
  /// Facet vertices, sorted ascending.
  const std::array<int, 2>& facet(int f) const { return facets_[f]; }
  /// Adjacent cells; second entry is -1 for boundary facets.
  const std::array<int, 2>& facet_cells(int f) const { return facet_cells_[f]; }
  int boundary_marker(int f) const { return facet_marker_[f]; }
  bool is_boundary_facet(int f) const { return facet_cells_[f][1] < 0; }

  /// Facets of cell c, indexed so that local facet k is opposite local
  /// vertex k.
  const std::array<int, 3>& cell_facets(int c) const { return cell_facets_[c]; }

  double cell_area(int c) const { return cell_area_[c]; }
  double total_area() const { return total_area_; }
  Eigen::Vector2d cell_centroid(int c) const;

  /// Affine map x = origin + J * xref for the reference triangle
  /// {(0,0),(1,0),(0,1)} and the inverse-transpose Jacobian used to push
  /// reference gradients to physical space.
  struct CellGeometry {
    double area;
    Eigen::Vector2d origin;
    Eigen::Matrix2d jacobian;
    Eigen::Matrix2d grad_transform;  // inverse transpose of jacobian
  };
  CellGeometry cell_geometry(int c) const;

  struct FacetGeometry {
    double length;
    Eigen::Vector2d normal;  // unit, points out of facet_cells(f)[0]
    Eigen::Vector2d midpoint;
    Eigen::Vector2d tangent;  // from lower- to higher-index vertex, unit
  };
  FacetGeometry facet_geometry(int f) const;

  /// Unit normal of the global facet orientation (tangent from lower to
  /// higher vertex index, rotated clockwise). Used by the RT dof convention.
  Eigen::Vector2d facet_oriented_normal(int f) const;

  const std::vector<int>& boundary_facets() const { return boundary_facets_; }
  const std::vector<int>& interior_facets() const { return interior_facets_; }

 private:
  void build_facets();
  void classify_boundary();

  std::vector<Eigen::Vector2d> vertices_;
  std::vector<std::array<int, 3>> cells_;
  std::vector<std::array<int, 2>> facets_;
  std::vector<std::array<int, 2>> facet_cells_;
  std::vector<std::array<int, 3>> cell_facets_;
  std::vector<int> facet_marker_;
  std::vector<int> boundary_facets_;
  std::vector<int> interior_facets_;
  std::vector<double> cell_area_;
  double total_area_ = 0.0;
};

/// Structured mesh of the unit square with n subdivisions per side.
TriMesh unit_square_mesh(int n, Diagonal diagonal = Diagonal::Right);

Diagonal parse_diagonal(const std::string& name);

/// Text format: first line "V E", then V lines "x y", then E lines "i j k".
TriMesh read_mesh(std::istream& in);
void write_mesh(const TriMesh& mesh, std::ostream& out);

}  // namespace convexfem

#endif
