#ifndef PNP_MESH_HPP
#define PNP_MESH_HPP

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace pnp {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

class MeshError : public std::runtime_error {
public:
  explicit MeshError(const std::string& what) : std::runtime_error(what) {}
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, int line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_number(line) {}
  int line_number;
};

enum class MeshKind { uniform, kershaw, perturbed, file };

/// Tetrahedral partition of the cube [-0.5, 0.5]^3 (or an imported domain).
/// All tetrahedra are positively oriented; h is the longest edge over the mesh.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<char> boundary_flag;
  double h = 0.0;

  // provenance of generated meshes (drives nesting checks and h labeling)
  MeshKind kind = MeshKind::file;
  int n = 0;
  double s = 0.0;

  int n_vertices() const { return static_cast<int>(vertices.size()); }
  int n_tets() const { return static_cast<int>(tets.size()); }
  double tet_volume(int t) const;

  /// Lattice-spacing label 1/n for generated meshes, geometric h otherwise.
  double h_label() const { return kind == MeshKind::file ? h : 1.0 / n; }
};

/// Interior-unknown numbering with Dirichlet vertices eliminated.
struct DofMap {
  std::vector<int> interior_index;  // per vertex; -1 for boundary vertices
  int n_interior = 0;

  static DofMap build(const Mesh& mesh);
};

/// For each fine vertex: the coarse tetrahedron containing it and its
/// barycentric coordinates there (ordering matches the tet's vertex order).
struct ParentMap {
  struct Entry {
    int coarse_tet = -1;
    std::array<double, 4> bary{};
  };
  std::vector<Entry> entries;
};

Mesh build_uniform(int n);
Mesh build_kershaw(int n, double s);
Mesh build_perturbed(int n, double s);

/// Halve the spacing of a structured mesh; returns the fine mesh and the
/// fine-vertex parent map. Only uniform input is accepted here.
std::pair<Mesh, ParentMap> refine_uniform(const Mesh& coarse);

/// Parent map for any nested structured pair (uniform or perturbed, same s,
/// fine.n a multiple of coarse.n). Exact barycentric weights.
ParentMap locate_parents(const Mesh& coarse, const Mesh& fine);

Mesh import_mesh(const std::string& path);
void export_mesh(const Mesh& mesh, const std::string& path);

}  // namespace pnp

#endif
