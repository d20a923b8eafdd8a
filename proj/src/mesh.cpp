#include "pnp/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pnp {

namespace {

// Kuhn split of a unit cell: six tets, one per axis permutation, all sharing
// the main diagonal. Odd permutations get their last two vertices swapped so
// every tet comes out positively oriented.
constexpr std::array<std::array<int, 3>, 6> kPerms = {{
    {0, 1, 2},
    {0, 2, 1},
    {1, 0, 2},
    {1, 2, 0},
    {2, 0, 1},
    {2, 1, 0},
}};
constexpr std::array<bool, 6> kPermOdd = {false, true, true, false, false, true};

double signed_volume(const Vec3& p0, const Vec3& p1, const Vec3& p2, const Vec3& p3) {
  return dot(p1 - p0, cross(p2 - p0, p3 - p0)) / 6.0;
}

double longest_edge(const Mesh& m, const std::array<int, 4>& t) {
  double len = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = a + 1; b < 4; ++b)
      len = std::max(len, norm(m.vertices[t[a]] - m.vertices[t[b]]));
  return len;
}

template <typename CoordFn>
Mesh build_lattice(int n, CoordFn coord, MeshKind kind, double s, bool normalize_orientation) {
  Mesh m;
  m.kind = kind;
  m.n = n;
  m.s = s;
  const int np = n + 1;
  m.vertices.reserve(static_cast<size_t>(np) * np * np);
  m.boundary_flag.reserve(m.vertices.capacity());
  for (int k = 0; k < np; ++k)
    for (int j = 0; j < np; ++j)
      for (int i = 0; i < np; ++i) {
        m.vertices.push_back(coord(i, j, k));
        const bool bdry = i == 0 || i == n || j == 0 || j == n || k == 0 || k == n;
        m.boundary_flag.push_back(bdry ? 1 : 0);
      }

  const auto vid = [np](int i, int j, int k) { return i + np * (j + np * k); };
  m.tets.reserve(static_cast<size_t>(n) * n * n * 6);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const std::array<int, 3> base = {i, j, k};
        for (int p = 0; p < 6; ++p) {
          std::array<int, 3> c1 = base, c2 = base;
          c1[kPerms[p][0]] += 1;
          c2[kPerms[p][0]] += 1;
          c2[kPerms[p][1]] += 1;
          const int v0 = vid(base[0], base[1], base[2]);
          const int v1 = vid(c1[0], c1[1], c1[2]);
          const int v2 = vid(c2[0], c2[1], c2[2]);
          const int v3 = vid(i + 1, j + 1, k + 1);
          if (kPermOdd[p])
            m.tets.push_back({v0, v1, v3, v2});
          else
            m.tets.push_back({v0, v1, v2, v3});
        }
      }

  double h = 0.0;
  for (size_t t = 0; t < m.tets.size(); ++t) {
    auto& tet = m.tets[t];
    double vol = signed_volume(m.vertices[tet[0]], m.vertices[tet[1]], m.vertices[tet[2]],
                               m.vertices[tet[3]]);
    if (vol < 0.0 && normalize_orientation) {
      std::swap(tet[2], tet[3]);
      vol = -vol;
    }
    const double edge = longest_edge(m, tet);
    if (!(vol > 1e-14 * edge * edge * edge))
      throw MeshError("generated tetrahedron " + std::to_string(t) + " is degenerate or inverted");
    h = std::max(h, edge);
  }
  m.h = h;
  return m;
}

double perturbed_xy(int i, int n, double s) {
  const double a = -0.5, b = 0.5;
  if (i == 0) return a;
  if (i == n) return b;
  const double a2 = a + (b - a) * (1.0 - s) / 2.0;
  if (i <= n / 2) return a + (b - a) * (1.0 - s) * i / n;
  return a2 + (b - a2) * (i - n / 2) / (n / 2.0);
}

double perturbed_z(int k, int n, double s) {
  const double a = -0.5, b = 0.5;
  if (k == 0) return a;
  if (k == n) return b;
  const double a1 = a + (b - a) * s / 2.0;
  if (k <= n / 2) return a + (b - a) * s * k / n;
  return a1 + (b - a1) * (k - n / 2) / (n / 2.0);
}

// Piecewise-linear z profiles of the Kershaw construction on [0,1];
// eps = 1 is the identity.
double kershaw_right(double eps, double x) { return x <= 0.5 ? (2.0 - eps) * x : 1.0 + eps * (x - 1.0); }
double kershaw_left(double eps, double x) { return 1.0 - kershaw_right(eps, 1.0 - x); }

double kershaw_profile(double eps, double xt, double zt) {
  int q = static_cast<int>(4.0 * xt);
  q = std::clamp(q, 0, 3);
  const double lam = 4.0 * xt - q;
  const double zl = kershaw_left(eps, zt);
  const double zr = kershaw_right(eps, zt);
  switch (q) {
    case 0: return zl;
    case 1: return zl + (zr - zl) * lam;
    case 2: return zr + (zl - zr) * (lam / 2.0);
    default: return zr + (zl - zr) * ((1.0 + lam) / 2.0);
  }
}

}  // namespace

double Mesh::tet_volume(int t) const {
  const auto& tet = tets[t];
  return signed_volume(vertices[tet[0]], vertices[tet[1]], vertices[tet[2]], vertices[tet[3]]);
}

DofMap DofMap::build(const Mesh& mesh) {
  DofMap dm;
  dm.interior_index.assign(mesh.vertices.size(), -1);
  for (size_t v = 0; v < mesh.vertices.size(); ++v)
    if (!mesh.boundary_flag[v]) dm.interior_index[v] = dm.n_interior++;
  return dm;
}

Mesh build_uniform(int n) {
  if (n < 1) throw std::invalid_argument("build_uniform: n must be >= 1");
  const double nd = n;
  return build_lattice(
      n,
      [nd](int i, int j, int k) {
        return Vec3{i / nd - 0.5, j / nd - 0.5, k / nd - 0.5};
      },
      MeshKind::uniform, 0.0, false);
}

Mesh build_kershaw(int n, double s) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("build_kershaw: n must be even and >= 2");
  if (!(s > 0.0 && s <= 0.5)) throw std::invalid_argument("build_kershaw: s must be in (0, 0.5]");
  const double nd = n;
  const double eps = 2.0 * s;
  return build_lattice(
      n,
      [nd, eps](int i, int j, int k) {
        const double xt = i / nd, yt = j / nd, zt = k / nd;
        return Vec3{xt - 0.5, yt - 0.5, kershaw_profile(eps, xt, zt) - 0.5};
      },
      MeshKind::kershaw, s, true);
}

Mesh build_perturbed(int n, double s) {
  if (n < 2 || n % 2 != 0) throw std::invalid_argument("build_perturbed: n must be even and >= 2");
  if (!(s > 0.0 && s <= 0.5)) throw std::invalid_argument("build_perturbed: s must be in (0, 0.5]");
  return build_lattice(
      n,
      [n, s](int i, int j, int k) {
        return Vec3{perturbed_xy(i, n, s), perturbed_xy(j, n, s), perturbed_z(k, n, s)};
      },
      MeshKind::perturbed, s, false);
}

ParentMap locate_parents(const Mesh& coarse, const Mesh& fine) {
  if (coarse.kind != fine.kind || (coarse.kind != MeshKind::uniform && coarse.kind != MeshKind::perturbed))
    throw MeshError("locate_parents: meshes must be a nested uniform or perturbed pair");
  if (coarse.kind == MeshKind::perturbed && coarse.s != fine.s)
    throw MeshError("locate_parents: distortion parameters differ");
  if (coarse.n < 1 || fine.n % coarse.n != 0 || fine.n <= coarse.n)
    throw MeshError("locate_parents: fine spacing must evenly refine the coarse one");

  const int r = fine.n / coarse.n;
  const int npf = fine.n + 1;
  ParentMap pm;
  pm.entries.resize(fine.vertices.size());
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const int i = v % npf;
    const int j = (v / npf) % npf;
    const int k = v / (npf * npf);
    const int ic = std::min(i / r, coarse.n - 1);
    const int jc = std::min(j / r, coarse.n - 1);
    const int kc = std::min(k / r, coarse.n - 1);
    const std::array<double, 3> u = {(i - ic * r) / static_cast<double>(r),
                                     (j - jc * r) / static_cast<double>(r),
                                     (k - kc * r) / static_cast<double>(r)};
    int perm = -1;
    for (int p = 0; p < 6; ++p) {
      const auto& pr = kPerms[p];
      if (u[pr[0]] >= u[pr[1]] && u[pr[1]] >= u[pr[2]]) {
        perm = p;
        break;
      }
    }
    const auto& pr = kPerms[perm];
    std::array<double, 4> bary = {1.0 - u[pr[0]], u[pr[0]] - u[pr[1]], u[pr[1]] - u[pr[2]],
                                  u[pr[2]]};
    if (kPermOdd[perm]) std::swap(bary[2], bary[3]);
    const int cell = ic + coarse.n * (jc + coarse.n * kc);
    pm.entries[v] = {cell * 6 + perm, bary};
  }
  return pm;
}

std::pair<Mesh, ParentMap> refine_uniform(const Mesh& coarse) {
  if (coarse.kind != MeshKind::uniform)
    throw MeshError("refine_uniform: unsupported input mesh kind (expected uniform)");
  Mesh fine = build_uniform(2 * coarse.n);
  ParentMap pm = locate_parents(coarse, fine);
  return {std::move(fine), std::move(pm)};
}

Mesh import_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("import_mesh: cannot open " + path);

  int line_no = 0;
  std::string line;
  const auto next_line = [&](const char* what) {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r\n") != std::string::npos) return;
    }
    throw ParseError(std::string("unexpected end of file, expected ") + what, line_no + 1);
  };

  next_line("vertex/tet counts");
  int nv = 0, nt = 0;
  {
    std::istringstream ss(line);
    if (!(ss >> nv >> nt) || nv <= 0 || nt <= 0)
      throw ParseError("malformed header, expected 'nv nt'", line_no);
  }

  Mesh m;
  m.vertices.reserve(nv);
  m.boundary_flag.reserve(nv);
  for (int v = 0; v < nv; ++v) {
    next_line("vertex line");
    std::istringstream ss(line);
    double x, y, z;
    int b;
    if (!(ss >> x >> y >> z >> b) || (b != 0 && b != 1))
      throw ParseError("malformed vertex line, expected 'x y z b'", line_no);
    m.vertices.push_back({x, y, z});
    m.boundary_flag.push_back(static_cast<char>(b));
  }
  m.tets.reserve(nt);
  for (int t = 0; t < nt; ++t) {
    next_line("tetrahedron line");
    std::istringstream ss(line);
    std::array<int, 4> tet{};
    if (!(ss >> tet[0] >> tet[1] >> tet[2] >> tet[3]))
      throw ParseError("malformed tetrahedron line, expected 'v0 v1 v2 v3'", line_no);
    for (int a = 0; a < 4; ++a)
      if (tet[a] < 0 || tet[a] >= nv)
        throw ParseError("vertex index " + std::to_string(tet[a]) + " out of range", line_no);
    m.tets.push_back(tet);
  }

  std::vector<char> used(m.vertices.size(), 0);
  double h = 0.0;
  for (size_t t = 0; t < m.tets.size(); ++t) {
    auto& tet = m.tets[t];
    for (int a = 0; a < 4; ++a) used[tet[a]] = 1;
    double vol = signed_volume(m.vertices[tet[0]], m.vertices[tet[1]], m.vertices[tet[2]],
                               m.vertices[tet[3]]);
    if (vol < 0.0) {
      std::swap(tet[2], tet[3]);
      vol = -vol;
    }
    const double edge = longest_edge(m, tet);
    if (!(vol > 1e-14 * edge * edge * edge))
      throw MeshError("import_mesh: inverted or degenerate element at tet " + std::to_string(t));
    h = std::max(h, edge);
  }
  for (size_t v = 0; v < used.size(); ++v)
    if (!used[v]) throw MeshError("import_mesh: vertex " + std::to_string(v) + " belongs to no tetrahedron");
  m.h = h;
  m.kind = MeshKind::file;
  return m;
}

void export_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_mesh: cannot open " + path);
  char buf[128];
  out << mesh.n_vertices() << ' ' << mesh.n_tets() << '\n';
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const Vec3& p = mesh.vertices[v];
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %d\n", p.x, p.y, p.z,
                  mesh.boundary_flag[v] ? 1 : 0);
    out << buf;
  }
  for (const auto& t : mesh.tets) out << t[0] << ' ' << t[1] << ' ' << t[2] << ' ' << t[3] << '\n';
  if (!out) throw std::runtime_error("export_mesh: write failed for " + path);
}

}  // namespace pnp
