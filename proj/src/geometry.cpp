#include "psmom/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <utility>

namespace psmom {

namespace {

constexpr double kMinTriangleArea = 1e-12;

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> nodes, std::vector<std::array<int, 3>> triangles)
    : nodes_(std::move(nodes)), triangles_(std::move(triangles)) {
  const int nn = num_nodes();
  std::map<std::pair<int, int>, std::vector<int>> adjacency;
  for (int t = 0; t < num_triangles(); ++t) {
    const auto& tri = triangles_[t];
    for (int v : tri) {
      if (v < 0 || v >= nn) {
        throw MeshError("triangle " + std::to_string(t) + " references node " + std::to_string(v) +
                        " outside [0, " + std::to_string(nn) + ")");
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw MeshError("degenerate triangle " + std::to_string(t) + ": repeated node index");
    }
    if (area(t) < kMinTriangleArea) {
      throw MeshError("degenerate triangle " + std::to_string(t) + ": area below 1e-12 m^2");
    }
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e];
      const int b = tri[(e + 1) % 3];
      adjacency[{std::min(a, b), std::max(a, b)}].push_back(t);
    }
  }
  edges_.reserve(adjacency.size());
  for (auto& [key, tris] : adjacency) {
    if (tris.size() > 2) {
      throw MeshError("non-manifold edge (" + std::to_string(key.first) + ", " +
                      std::to_string(key.second) + ") shared by " + std::to_string(tris.size()) +
                      " triangles");
    }
    edges_.push_back(MeshEdge{key.first, key.second, std::move(tris)});
  }
}

int TriangleMesh::num_interior_edges() const {
  return static_cast<int>(
      std::count_if(edges_.begin(), edges_.end(), [](const MeshEdge& e) { return e.interior(); }));
}

double TriangleMesh::area(int t) const {
  const auto& tri = triangles_[t];
  return 0.5 * (nodes_[tri[1]] - nodes_[tri[0]]).cross(nodes_[tri[2]] - nodes_[tri[0]]).norm();
}

Vec3 TriangleMesh::normal(int t) const {
  const auto& tri = triangles_[t];
  return (nodes_[tri[1]] - nodes_[tri[0]]).cross(nodes_[tri[2]] - nodes_[tri[0]]).normalized();
}

Vec3 TriangleMesh::centroid(int t) const {
  const auto& tri = triangles_[t];
  return (nodes_[tri[0]] + nodes_[tri[1]] + nodes_[tri[2]]) / 3.0;
}

double TriangleMesh::max_edge_length() const {
  double m = 0.0;
  for (const auto& e : edges_) m = std::max(m, (nodes_[e.a] - nodes_[e.b]).norm());
  return m;
}

double TriangleMesh::mean_edge_length() const {
  if (edges_.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : edges_) s += (nodes_[e.a] - nodes_[e.b]).norm();
  return s / static_cast<double>(edges_.size());
}

TriangleMesh TriangleMesh::translated(const Vec3& shift) const {
  auto moved = nodes_;
  for (auto& p : moved) p += shift;
  return TriangleMesh(std::move(moved), triangles_);
}

SurfaceKind classify_surface(const TriangleMesh& mesh) {
  for (const auto& e : mesh.edges()) {
    if (!e.interior()) return SurfaceKind::open;
  }
  return SurfaceKind::closed;
}

// ---------------------------------------------------------------------------
// ASCII mesh format

TriangleMesh parse_mesh(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    lines.push_back(line);
  }
  if (lines.empty()) throw MeshError("mesh parse error: empty input");

  long n_nodes = -1;
  long n_tris = -1;
  {
    std::istringstream header(lines[0]);
    if (!(header >> n_nodes >> n_tris) || n_nodes < 0 || n_tris < 0) {
      throw MeshError("mesh parse error: header must be `N_nodes N_triangles`");
    }
  }
  if (static_cast<long>(lines.size()) != 1 + n_nodes + n_tris) {
    throw MeshError("mesh parse error: expected " + std::to_string(n_nodes + n_tris) +
                    " data lines, found " + std::to_string(lines.size() - 1));
  }

  std::vector<Vec3> nodes(n_nodes);
  for (long i = 0; i < n_nodes; ++i) {
    std::istringstream row(lines[1 + i]);
    double x, y, z;
    if (!(row >> x >> y >> z)) {
      throw MeshError("mesh parse error: bad node line " + std::to_string(i));
    }
    nodes[i] = Vec3(x, y, z);
  }
  std::vector<std::array<int, 3>> tris(n_tris);
  for (long t = 0; t < n_tris; ++t) {
    std::istringstream row(lines[1 + n_nodes + t]);
    long a, b, c;
    if (!(row >> a >> b >> c)) {
      throw MeshError("mesh parse error: bad triangle line " + std::to_string(t));
    }
    tris[t] = {static_cast<int>(a), static_cast<int>(b), static_cast<int>(c)};
  }
  return TriangleMesh(std::move(nodes), std::move(tris));
}

TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
  if (format != MeshFormat::ascii_tri) throw MeshError("unsupported mesh format");
  std::ifstream file(path);
  if (!file) throw MeshError("cannot open mesh file '" + path + "'");
  std::stringstream buffer;
  buffer << file.rdbuf();
  return parse_mesh(buffer.str());
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file '" + path + "'");
  out << mesh.num_nodes() << ' ' << mesh.num_triangles() << '\n';
  out << std::setprecision(17);
  for (const auto& p : mesh.nodes()) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  for (const auto& t : mesh.triangles()) out << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
}

// ---------------------------------------------------------------------------
// Generators

TriangleMesh make_geodesic_sphere(double radius, int frequency) {
  if (radius <= 0.0) throw std::invalid_argument("make_sphere: radius must be positive");
  if (frequency < 1) throw std::invalid_argument("make_sphere: frequency must be >= 1");

  const double phi = 0.5 * (1.0 + std::sqrt(5.0));
  const std::array<Vec3, 12> ico = {
      Vec3(-1, phi, 0), Vec3(1, phi, 0),  Vec3(-1, -phi, 0), Vec3(1, -phi, 0),
      Vec3(0, -1, phi), Vec3(0, 1, phi),  Vec3(0, -1, -phi), Vec3(0, 1, -phi),
      Vec3(phi, 0, -1), Vec3(phi, 0, 1),  Vec3(-phi, 0, -1), Vec3(-phi, 0, 1)};
  const std::array<std::array<int, 3>, 20> faces = {{
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}}};

  // A subdivision point is identified by its integer barycentric weights on
  // the global icosahedron vertices; points on shared edges then coincide
  // exactly between neighbouring faces.
  using Key = std::vector<std::pair<int, int>>;
  std::map<Key, int> index;
  std::vector<Vec3> nodes;
  const int nu = frequency;
  auto node_for = [&](const std::array<int, 3>& f, int i, int j) {
    const int w[3] = {i, j, nu - i - j};
    Key key;
    for (int c = 0; c < 3; ++c) {
      if (w[c] > 0) key.emplace_back(f[c], w[c]);
    }
    std::sort(key.begin(), key.end());
    auto [it, inserted] = index.try_emplace(key, static_cast<int>(nodes.size()));
    if (inserted) {
      Vec3 p = Vec3::Zero();
      for (auto [v, wt] : key) p += static_cast<double>(wt) * ico[v];
      nodes.push_back(radius * p.normalized());
    }
    return it->second;
  };

  std::vector<std::array<int, 3>> tris;
  tris.reserve(20 * nu * nu);
  for (const auto& f : faces) {
    // grid point (i, j): weight i on f[0], j on f[1], rest on f[2]
    for (int i = 0; i < nu; ++i) {
      for (int j = 0; j < nu - i; ++j) {
        const int a = node_for(f, i, j);
        const int b = node_for(f, i + 1, j);
        const int c = node_for(f, i, j + 1);
        tris.push_back({a, b, c});
        if (i + j + 1 < nu) {
          const int d = node_for(f, i + 1, j + 1);
          tris.push_back({b, d, c});
        }
      }
    }
  }
  // Orientation follows from face order (f[0], f[1], f[2]); make it outward.
  TriangleMesh mesh(nodes, tris);
  if (mesh.normal(0).dot(mesh.centroid(0)) < 0.0) {
    for (auto& t : tris) std::swap(t[1], t[2]);
    mesh = TriangleMesh(std::move(nodes), std::move(tris));
  }
  return mesh;
}

TriangleMesh make_sphere(double radius, double target_edge) {
  if (radius <= 0.0) throw std::invalid_argument("make_sphere: radius must be positive");
  if (target_edge <= 0.0) throw std::invalid_argument("make_sphere: target_edge must be positive");
  for (int nu = 1;; ++nu) {
    TriangleMesh mesh = make_geodesic_sphere(radius, nu);
    if (mesh.mean_edge_length() <= target_edge) return mesh;
  }
}

namespace {

// Grid of (d+1)^2 points on a square face spanned from `origin` by `u`, `v`;
// each cell split along the same diagonal.
void add_grid_face(const Vec3& origin, const Vec3& u, const Vec3& v, int d,
                   std::map<std::array<long long, 3>, int>& index, std::vector<Vec3>& nodes,
                   std::vector<std::array<int, 3>>& tris, double quantum) {
  auto node_at = [&](int i, int j) {
    const Vec3 p = origin + (static_cast<double>(i) / d) * u + (static_cast<double>(j) / d) * v;
    const std::array<long long, 3> key = {std::llround(p.x() / quantum),
                                          std::llround(p.y() / quantum),
                                          std::llround(p.z() / quantum)};
    auto [it, inserted] = index.try_emplace(key, static_cast<int>(nodes.size()));
    if (inserted) nodes.push_back(p);
    return it->second;
  };
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      const int a = node_at(i, j);
      const int b = node_at(i + 1, j);
      const int c = node_at(i + 1, j + 1);
      const int e = node_at(i, j + 1);
      tris.push_back({a, b, c});
      tris.push_back({a, c, e});
    }
  }
}

}  // namespace

TriangleMesh make_plate(double side, int divisions) {
  if (side <= 0.0 || divisions < 1) {
    throw std::invalid_argument("make_plate: side > 0 and divisions >= 1 required");
  }
  std::map<std::array<long long, 3>, int> index;
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 3>> tris;
  const double h = 0.5 * side;
  add_grid_face(Vec3(-h, -h, 0), Vec3(side, 0, 0), Vec3(0, side, 0), divisions, index, nodes,
                tris, side * 1e-9);
  return TriangleMesh(std::move(nodes), std::move(tris));
}

TriangleMesh make_cube(double side, int divisions) {
  if (side <= 0.0 || divisions < 1) {
    throw std::invalid_argument("make_cube: side > 0 and divisions >= 1 required");
  }
  std::map<std::array<long long, 3>, int> index;
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 3>> tris;
  const double h = 0.5 * side;
  const double q = side * 1e-9;
  const Vec3 ex(side, 0, 0), ey(0, side, 0), ez(0, 0, side);
  // u x v points outward on every face
  add_grid_face(Vec3(-h, -h, -h), ey, ex, divisions, index, nodes, tris, q);  // z = -h
  add_grid_face(Vec3(-h, -h, h), ex, ey, divisions, index, nodes, tris, q);   // z = +h
  add_grid_face(Vec3(-h, -h, -h), ex, ez, divisions, index, nodes, tris, q);  // y = -h
  add_grid_face(Vec3(-h, h, -h), ez, ex, divisions, index, nodes, tris, q);   // y = +h
  add_grid_face(Vec3(-h, -h, -h), ez, ey, divisions, index, nodes, tris, q);  // x = -h
  add_grid_face(Vec3(h, -h, -h), ey, ez, divisions, index, nodes, tris, q);   // x = +h
  return TriangleMesh(std::move(nodes), std::move(tris));
}

// ---------------------------------------------------------------------------
// RWG basis

namespace {

int opposite_vertex(const std::array<int, 3>& tri, int a, int b) {
  for (int v : tri) {
    if (v != a && v != b) return v;
  }
  return -1;
}

}  // namespace

RwgBasisSet::RwgBasisSet(const TriangleMesh& mesh) : mesh_(mesh) {
  const auto& edges = mesh_.edges();
  for (int e = 0; e < static_cast<int>(edges.size()); ++e) {
    const auto& edge = edges[e];
    if (!edge.interior()) continue;
    RwgFunction f;
    f.edge = e;
    f.plus_triangle = std::min(edge.triangles[0], edge.triangles[1]);
    f.minus_triangle = std::max(edge.triangles[0], edge.triangles[1]);
    f.length = (mesh_.nodes()[edge.a] - mesh_.nodes()[edge.b]).norm();
    f.plus_vertex = opposite_vertex(mesh_.triangles()[f.plus_triangle], edge.a, edge.b);
    f.minus_vertex = opposite_vertex(mesh_.triangles()[f.minus_triangle], edge.a, edge.b);
    functions_.push_back(f);
    centroids_.push_back(0.5 * (mesh_.nodes()[edge.a] + mesh_.nodes()[edge.b]));
  }
}

Vec3 RwgBasisSet::evaluate(int n, int t, const Vec3& r) const {
  const auto& f = functions_[n];
  if (t == f.plus_triangle) {
    return f.length / (2.0 * mesh_.area(t)) * (r - mesh_.nodes()[f.plus_vertex]);
  }
  if (t == f.minus_triangle) {
    return f.length / (2.0 * mesh_.area(t)) * (mesh_.nodes()[f.minus_vertex] - r);
  }
  return Vec3::Zero();
}

double RwgBasisSet::divergence(int n, int t) const {
  const auto& f = functions_[n];
  if (t == f.plus_triangle) return f.length / mesh_.area(t);
  if (t == f.minus_triangle) return -f.length / mesh_.area(t);
  return 0.0;
}

RwgBasisSet build_rwg(const TriangleMesh& mesh) {
  if (mesh.num_interior_edges() == 0) {
    throw MeshError("mesh has no interior edge; no RWG function can be built");
  }
  return RwgBasisSet(mesh);
}

}  // namespace psmom
