#pragma once

#include <array>
#include <string>
#include <vector>

#include "psmom/types.hpp"

namespace psmom {

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct MeshEdge {
  int a = 0;  // smaller node id
  int b = 0;  // larger node id
  std::vector<int> triangles;

  bool interior() const { return triangles.size() == 2; }
};

/// Triangulated surface. Triangles are expected to be oriented with outward
/// normals (counter-clockwise seen from outside) on closed bodies; the MFIE
/// kernel uses that orientation.
class TriangleMesh {
 public:
  TriangleMesh() = default;

  /// Validates topology and builds the edge table. Throws MeshError on
  /// out-of-range/repeated node indices, area < 1e-12 m^2 or an edge shared
  /// by more than two triangles.
  TriangleMesh(std::vector<Vec3> nodes, std::vector<std::array<int, 3>> triangles);

  const std::vector<Vec3>& nodes() const { return nodes_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  /// Sorted by (min node id, max node id).
  const std::vector<MeshEdge>& edges() const { return edges_; }

  int num_nodes() const { return static_cast<int>(nodes_.size()); }
  int num_triangles() const { return static_cast<int>(triangles_.size()); }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  int num_interior_edges() const;

  double area(int t) const;
  Vec3 normal(int t) const;  // unit, right-hand rule on vertex order
  Vec3 centroid(int t) const;
  double max_edge_length() const;
  double mean_edge_length() const;

  TriangleMesh translated(const Vec3& shift) const;

 private:
  std::vector<Vec3> nodes_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<MeshEdge> edges_;
};

enum class SurfaceKind { closed, open };

SurfaceKind classify_surface(const TriangleMesh& mesh);

/// Mesh-format ids accepted by load_mesh.
enum class MeshFormat { ascii_tri };

/// ASCII layout: first non-comment line `N_nodes N_triangles`, then node
/// lines `x y z`, then triangle lines `i j k` (0-based). `#` starts a comment.
TriangleMesh load_mesh(const std::string& path, MeshFormat format = MeshFormat::ascii_tri);
TriangleMesh parse_mesh(const std::string& text);
void save_mesh(const TriangleMesh& mesh, const std::string& path);

/// Geodesic icosphere: each icosahedron face split into nu^2 triangles and
/// projected to the sphere, with the smallest nu whose mean edge length does
/// not exceed target_edge.
TriangleMesh make_sphere(double radius, double target_edge);
TriangleMesh make_geodesic_sphere(double radius, int frequency);
/// Square plate in the z = 0 plane centred on the origin.
TriangleMesh make_plate(double side, int divisions);
/// Closed cube centred on the origin, outward oriented.
TriangleMesh make_cube(double side, int divisions);

struct RwgFunction {
  int edge = 0;
  int plus_triangle = 0;
  int minus_triangle = 0;
  double length = 0.0;
  int plus_vertex = 0;   // node opposite the edge in the plus triangle
  int minus_vertex = 0;  // node opposite the edge in the minus triangle
};

/// One RWG function per interior edge, in edge-table order. Holds its own
/// copy of the mesh.
class RwgBasisSet {
 public:
  explicit RwgBasisSet(const TriangleMesh& mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  int size() const { return static_cast<int>(functions_.size()); }
  const RwgFunction& operator[](int i) const { return functions_[i]; }
  const std::vector<RwgFunction>& functions() const { return functions_; }
  /// Edge midpoints, used for clustering.
  const std::vector<Vec3>& centroids() const { return centroids_; }

  /// Value of basis n at point r lying on triangle t (zero off-support).
  Vec3 evaluate(int n, int t, const Vec3& r) const;
  /// Surface divergence on triangle t (+-l/A, zero off-support).
  double divergence(int n, int t) const;

 private:
  TriangleMesh mesh_;
  std::vector<RwgFunction> functions_;
  std::vector<Vec3> centroids_;
};

/// Throws MeshError when the mesh has no interior edge.
RwgBasisSet build_rwg(const TriangleMesh& mesh);

}  // namespace psmom
