#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pnp/mesh.hpp"

using namespace pnp;

namespace {

double total_volume(const Mesh& m) {
  double v = 0.0;
  for (int t = 0; t < m.n_tets(); ++t) v += m.tet_volume(t);
  return v;
}

bool boundary_flags_match_coordinates(const Mesh& m) {
  for (int v = 0; v < m.n_vertices(); ++v) {
    const Vec3& p = m.vertices[v];
    const bool on_face = std::abs(std::abs(p.x) - 0.5) <= 1e-12 ||
                         std::abs(std::abs(p.y) - 0.5) <= 1e-12 ||
                         std::abs(std::abs(p.z) - 0.5) <= 1e-12;
    if (on_face != static_cast<bool>(m.boundary_flag[v])) return false;
  }
  return true;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("uniform mesh combinatorics") {
  const Mesh m1 = build_uniform(1);
  CHECK(m1.n_vertices() == 8);
  CHECK(m1.n_tets() == 6);

  const Mesh m2 = build_uniform(2);
  CHECK(m2.n_vertices() == 27);
  CHECK(m2.n_tets() == 48);
  for (int t = 0; t < m2.n_tets(); ++t)
    CHECK(m2.tet_volume(t) == doctest::Approx(1.0 / 48.0).epsilon(1e-12));
  CHECK(total_volume(m2) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(m2.h == doctest::Approx(std::sqrt(3.0) / 2.0));
  CHECK(m2.h_label() == doctest::Approx(0.5));
  CHECK(boundary_flags_match_coordinates(m2));
}

TEST_CASE("every vertex belongs to at least one tet") {
  const Mesh m = build_uniform(3);
  std::vector<int> count(m.n_vertices(), 0);
  for (const auto& t : m.tets)
    for (int v : t) ++count[v];
  for (int c : count) CHECK(c >= 1);
}

TEST_CASE("kershaw mesh is uniform at s = 0.5 and valid otherwise") {
  const Mesh uni = build_uniform(4);
  const Mesh k = build_kershaw(4, 0.5);
  REQUIRE(k.n_vertices() == uni.n_vertices());
  for (int v = 0; v < k.n_vertices(); ++v) {
    CHECK(k.vertices[v].x == uni.vertices[v].x);
    CHECK(k.vertices[v].y == uni.vertices[v].y);
    CHECK(k.vertices[v].z == uni.vertices[v].z);
  }

  const Mesh sheared = build_kershaw(4, 0.3);
  for (int t = 0; t < sheared.n_tets(); ++t) CHECK(sheared.tet_volume(t) > 0.0);
  CHECK(total_volume(sheared) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(boundary_flags_match_coordinates(sheared));

  CHECK_THROWS_AS(build_kershaw(5, 0.3), std::invalid_argument);  // odd n
  CHECK_THROWS_AS(build_kershaw(4, 0.0), std::invalid_argument);
}

TEST_CASE("perturbed mesh follows the printed coordinate formulas") {
  const Mesh m = build_perturbed(4, 0.2);
  const int np = 5;
  const auto vid = [np](int i, int j, int k) { return i + np * (j + np * k); };

  // x at i = 2 (1-based): -0.5 + 1 * 0.8 * 1/4 = -0.3
  CHECK(m.vertices[vid(1, 0, 0)].x == doctest::Approx(-0.3).epsilon(1e-14));
  // z at k = 2 (1-based): -0.5 + 0.2 * 1/4 = -0.45
  CHECK(m.vertices[vid(0, 0, 1)].z == doctest::Approx(-0.45).epsilon(1e-14));

  // boundary vertices unmoved
  const Mesh uni = build_uniform(4);
  for (int v = 0; v < m.n_vertices(); ++v) {
    if (!m.boundary_flag[v]) continue;
    const Vec3& p = m.vertices[v];
    const Vec3& q = uni.vertices[v];
    if (std::abs(std::abs(q.x) - 0.5) <= 1e-12) CHECK(p.x == q.x);
    if (std::abs(std::abs(q.y) - 0.5) <= 1e-12) CHECK(p.y == q.y);
    if (std::abs(std::abs(q.z) - 0.5) <= 1e-12) CHECK(p.z == q.z);
  }

  for (int t = 0; t < m.n_tets(); ++t) CHECK(m.tet_volume(t) > 0.0);
  CHECK(total_volume(m) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(boundary_flags_match_coordinates(m));
  CHECK_THROWS_AS(build_perturbed(5, 0.2), std::invalid_argument);
}

TEST_CASE("perturbed interior coordinates stay monotone and inside the cube") {
  for (double s : {0.1, 0.2, 0.4}) {
    const Mesh m = build_perturbed(8, s);
    const int np = 9;
    for (int i = 0; i + 1 < np; ++i) {
      CHECK(m.vertices[i].x < m.vertices[i + 1].x);
      CHECK(m.vertices[i * np].y < m.vertices[(i + 1) * np].y);
      CHECK(m.vertices[i * np * np].z < m.vertices[(i + 1) * np * np].z);
    }
  }
}

TEST_CASE("refine_uniform reproduces the finer generator and nests exactly") {
  const Mesh coarse = build_uniform(2);
  const auto [fine, parents] = refine_uniform(coarse);
  const Mesh direct = build_uniform(4);
  REQUIRE(fine.n_vertices() == direct.n_vertices());
  REQUIRE(fine.n_tets() == direct.n_tets());
  for (int v = 0; v < fine.n_vertices(); ++v) {
    CHECK(fine.vertices[v].x == direct.vertices[v].x);
    CHECK(fine.vertices[v].y == direct.vertices[v].y);
    CHECK(fine.vertices[v].z == direct.vertices[v].z);
  }
  for (int t = 0; t < fine.n_tets(); ++t) {
    CHECK(fine.tets[t] == direct.tets[t]);
  }

  // barycentric coordinates lie in [0,1], sum to 1, and reproduce the vertex
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const auto& e = parents.entries[v];
    REQUIRE(e.coarse_tet >= 0);
    double sum = 0.0;
    Vec3 x{0, 0, 0};
    for (int a = 0; a < 4; ++a) {
      CHECK(e.bary[a] >= -1e-12);
      CHECK(e.bary[a] <= 1.0 + 1e-12);
      sum += e.bary[a];
      x = x + coarse.vertices[coarse.tets[e.coarse_tet][a]] * e.bary[a];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(norm(x - fine.vertices[v]) <= 1e-12);
  }

  // coarse vertices map to themselves with weight one
  int self_mapped = 0;
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const auto& e = parents.entries[v];
    for (int a = 0; a < 4; ++a) {
      if (e.bary[a] == 1.0) {
        CHECK(norm(coarse.vertices[coarse.tets[e.coarse_tet][a]] - fine.vertices[v]) == 0.0);
        ++self_mapped;
      }
    }
  }
  CHECK(self_mapped == coarse.n_vertices());

  CHECK_THROWS_AS(refine_uniform(build_kershaw(4, 0.3)), MeshError);
}

TEST_CASE("perturbed refinement nests exactly") {
  const Mesh coarse = build_perturbed(4, 0.2);
  const Mesh fine = build_perturbed(8, 0.2);
  const ParentMap parents = locate_parents(coarse, fine);
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const auto& e = parents.entries[v];
    Vec3 x{0, 0, 0};
    double sum = 0.0;
    for (int a = 0; a < 4; ++a) {
      CHECK(e.bary[a] >= -1e-12);
      sum += e.bary[a];
      x = x + coarse.vertices[coarse.tets[e.coarse_tet][a]] * e.bary[a];
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(norm(x - fine.vertices[v]) <= 1e-12);
  }
}

TEST_CASE("locate_parents supports ratio four (two-grid coarsening 1:64)") {
  const Mesh coarse = build_uniform(2);
  const Mesh fine = build_uniform(8);
  const ParentMap parents = locate_parents(coarse, fine);
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const auto& e = parents.entries[v];
    Vec3 x{0, 0, 0};
    for (int a = 0; a < 4; ++a)
      x = x + coarse.vertices[coarse.tets[e.coarse_tet][a]] * e.bary[a];
    CHECK(norm(x - fine.vertices[v]) <= 1e-12);
  }
}

TEST_CASE("mesh generators are deterministic") {
  const Mesh a = build_kershaw(6, 0.3);
  const Mesh b = build_kershaw(6, 0.3);
  REQUIRE(a.n_vertices() == b.n_vertices());
  for (int v = 0; v < a.n_vertices(); ++v) {
    CHECK(a.vertices[v].x == b.vertices[v].x);
    CHECK(a.vertices[v].y == b.vertices[v].y);
    CHECK(a.vertices[v].z == b.vertices[v].z);
  }
  CHECK(a.tets == b.tets);
}

TEST_CASE("export/import round trip is exact") {
  const Mesh m = build_uniform(2);
  const std::string path = temp_path("pnp_mesh_roundtrip.txt");
  export_mesh(m, path);
  const Mesh r = import_mesh(path);
  REQUIRE(r.n_vertices() == m.n_vertices());
  REQUIRE(r.n_tets() == m.n_tets());
  for (int v = 0; v < m.n_vertices(); ++v) {
    CHECK(r.vertices[v].x == m.vertices[v].x);
    CHECK(r.vertices[v].y == m.vertices[v].y);
    CHECK(r.vertices[v].z == m.vertices[v].z);
    CHECK(r.boundary_flag[v] == m.boundary_flag[v]);
  }
  CHECK(r.tets == m.tets);
  CHECK(r.h == doctest::Approx(m.h));
  std::filesystem::remove(path);
}

TEST_CASE("import rejects degenerate and malformed input") {
  const std::string path = temp_path("pnp_mesh_bad.txt");
  {
    // zero-volume tet: four coplanar points
    std::ofstream out(path);
    out << "4 1\n0 0 0 1\n1 0 0 1\n0 1 0 1\n1 1 0 1\n0 1 2 3\n";
  }
  CHECK_THROWS_AS(import_mesh(path), MeshError);

  {
    // vertex index out of range
    std::ofstream out(path);
    out << "4 1\n0 0 0 1\n1 0 0 1\n0 1 0 1\n0 0 1 1\n0 1 2 7\n";
  }
  CHECK_THROWS_AS(import_mesh(path), ParseError);

  {
    // truncated file
    std::ofstream out(path);
    out << "4 1\n0 0 0 1\n";
  }
  CHECK_THROWS_AS(import_mesh(path), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("import normalizes inverted orientation silently") {
  const std::string path = temp_path("pnp_mesh_orient.txt");
  {
    std::ofstream out(path);
    // negatively oriented but non-degenerate tet
    out << "4 1\n0 0 0 1\n1 0 0 1\n0 1 0 1\n0 0 1 1\n0 2 1 3\n";
  }
  const Mesh m = import_mesh(path);
  CHECK(m.tet_volume(0) > 0.0);
  std::filesystem::remove(path);
}

TEST_CASE("dofmap numbers interior vertices consecutively") {
  const Mesh m = build_uniform(3);
  const DofMap dm = DofMap::build(m);
  CHECK(dm.n_interior == 8);  // (3-1)^3
  int next = 0;
  for (int v = 0; v < m.n_vertices(); ++v) {
    if (m.boundary_flag[v]) {
      CHECK(dm.interior_index[v] == -1);
    } else {
      CHECK(dm.interior_index[v] == next++);
    }
  }
}
