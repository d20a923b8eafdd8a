#include "pnp/assembly.hpp"

#include <algorithm>
#include <cmath>

namespace pnp {

double bernoulli(double t) {
  if (std::abs(t) < 1e-4) {
    // B(t) = 1 - t/2 + t^2/12 - t^4/720 + t^6/30240 - ...
    const double t2 = t * t;
    return 1.0 - t / 2.0 + t2 / 12.0 - t2 * t2 / 720.0 + t2 * t2 * t2 / 30240.0;
  }
  return t / std::expm1(t);
}

SystemState SystemState::zeros(int n_interior) {
  SystemState s;
  s.phi.assign(n_interior, 0.0);
  s.p1.assign(n_interior, 0.0);
  s.p2.assign(n_interior, 0.0);
  return s;
}

std::vector<ElementGeometry> compute_geometry(const Mesh& mesh) {
  std::vector<ElementGeometry> geom(mesh.n_tets());
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const Vec3& p0 = mesh.vertices[tet[0]];
    const Vec3 e1 = mesh.vertices[tet[1]] - p0;
    const Vec3 e2 = mesh.vertices[tet[2]] - p0;
    const Vec3 e3 = mesh.vertices[tet[3]] - p0;
    const double det = dot(e1, cross(e2, e3));
    if (!(det > 0.0))
      throw MeshError("compute_geometry: degenerate element (zero volume) at tet " + std::to_string(t));
    ElementGeometry& g = geom[t];
    g.volume = det / 6.0;
    // rows of the inverse Jacobian are the gradients of λ1..λ3
    const Vec3 c1 = cross(e2, e3);
    const Vec3 c2 = cross(e3, e1);
    const Vec3 c3 = cross(e1, e2);
    g.grad[1] = c1 * (1.0 / det);
    g.grad[2] = c2 * (1.0 / det);
    g.grad[3] = c3 * (1.0 / det);
    g.grad[0] = (g.grad[1] + g.grad[2] + g.grad[3]) * -1.0;
    for (int e = 0; e < 6; ++e) {
      const auto [a, b] = kTetEdges[e];
      g.edge_weight[e] = -dot(g.grad[a], g.grad[b]) * g.volume;
    }
  }
  return geom;
}

namespace {

// 4-point rule, exact for quadratics.
constexpr double kA4 = 0.1381966011250105;   // (5 - sqrt(5)) / 20
constexpr double kB4 = 0.5854101966249685;   // (5 + 3 sqrt(5)) / 20
const std::array<QuadPoint, 4> kRule4 = {{
    {{kB4, kA4, kA4, kA4}, 0.25},
    {{kA4, kB4, kA4, kA4}, 0.25},
    {{kA4, kA4, kB4, kA4}, 0.25},
    {{kA4, kA4, kA4, kB4}, 0.25},
}};

// Keast 14-point rule, exact for quintics.
std::array<QuadPoint, 14> make_rule14() {
  std::array<QuadPoint, 14> r{};
  int idx = 0;
  const auto orbit4 = [&](double corner, double other, double w) {
    for (int i = 0; i < 4; ++i) {
      std::array<double, 4> b{other, other, other, other};
      b[i] = corner;
      r[idx++] = {b, w};
    }
  };
  orbit4(0.7217942490673264, 0.0927352503108912, 0.0734930431163619);
  orbit4(0.0673422422100983, 0.3108859192633005, 0.1126879257180162);
  const double c = 0.0455037041256494;
  const double d = 0.4544962958743506;
  const double w6 = 0.0425460207770812;
  const std::array<std::array<int, 2>, 6> pairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
  for (const auto& pr : pairs) {
    std::array<double, 4> b{c, c, c, c};
    b[pr[0]] = d;
    b[pr[1]] = d;
    r[idx++] = {b, w6};
  }
  return r;
}
const std::array<QuadPoint, 14> kRule14 = make_rule14();

}  // namespace

std::span<const QuadPoint> tet_rule_order2() { return kRule4; }
std::span<const QuadPoint> tet_rule_order5() { return kRule14; }

SparseMatrix assemble_laplacian_full(const Mesh& mesh, const std::vector<ElementGeometry>& geom) {
  std::vector<Triplet> ts;
  ts.reserve(static_cast<size_t>(mesh.n_tets()) * 16);
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const ElementGeometry& g = geom[t];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        ts.push_back({tet[a], tet[b], dot(g.grad[a], g.grad[b]) * g.volume});
  }
  return SparseMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), ts);
}

SparseMatrix assemble_laplacian(const Mesh& mesh, const DofMap& dofmap) {
  const auto geom = compute_geometry(mesh);
  std::vector<Triplet> ts;
  ts.reserve(static_cast<size_t>(mesh.n_tets()) * 16);
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const ElementGeometry& g = geom[t];
    for (int a = 0; a < 4; ++a) {
      const int ia = dofmap.interior_index[tet[a]];
      if (ia < 0) continue;
      for (int b = 0; b < 4; ++b) {
        const int ib = dofmap.interior_index[tet[b]];
        if (ib < 0) continue;
        ts.push_back({ia, ib, dot(g.grad[a], g.grad[b]) * g.volume});
      }
    }
  }
  return SparseMatrix::from_triplets(dofmap.n_interior, dofmap.n_interior, ts);
}

std::vector<double> assemble_lumped_mass_full(const Mesh& mesh) {
  std::vector<double> m(mesh.vertices.size(), 0.0);
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const double quarter = mesh.tet_volume(t) / 4.0;
    for (int a = 0; a < 4; ++a) m[mesh.tets[t][a]] += quarter;
  }
  return m;
}

std::vector<double> assemble_lumped_mass(const Mesh& mesh, const DofMap& dofmap) {
  const auto full = assemble_lumped_mass_full(mesh);
  std::vector<double> m(dofmap.n_interior, 0.0);
  for (size_t v = 0; v < full.size(); ++v) {
    const int i = dofmap.interior_index[v];
    if (i >= 0) m[i] = full[v];
  }
  return m;
}

EafeAssembler::EafeAssembler(const Mesh& mesh) {
  std::vector<Triplet> ts;
  ts.reserve(static_cast<size_t>(mesh.n_tets()) * 24);
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    for (const auto& [a, b] : kTetEdges) {
      ts.push_back({tet[a], tet[a], 1.0});
      ts.push_back({tet[a], tet[b], 1.0});
      ts.push_back({tet[b], tet[b], 1.0});
      ts.push_back({tet[b], tet[a], 1.0});
    }
  }
  skeleton_ = SparseMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), ts);

  const auto& row_ptr = skeleton_.row_ptr();
  const auto& col_idx = skeleton_.col_idx();
  const auto find_slot = [&](int i, int j) {
    const auto begin = col_idx.begin() + row_ptr[i];
    const auto end = col_idx.begin() + row_ptr[static_cast<size_t>(i) + 1];
    return static_cast<int>(std::lower_bound(begin, end, j) - col_idx.begin());
  };
  slot_.resize(static_cast<size_t>(mesh.n_tets()) * 24);
  size_t k = 0;
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    for (const auto& [a, b] : kTetEdges) {
      slot_[k++] = find_slot(tet[a], tet[a]);
      slot_[k++] = find_slot(tet[a], tet[b]);
      slot_[k++] = find_slot(tet[b], tet[b]);
      slot_[k++] = find_slot(tet[b], tet[a]);
    }
  }
}

SparseMatrix EafeAssembler::assemble(const Mesh& mesh, const std::vector<ElementGeometry>& geom,
                                     std::span<const double> phi_full, double q) const {
  if (static_cast<int>(phi_full.size()) != mesh.n_vertices())
    throw std::invalid_argument("EafeAssembler::assemble: potential must cover all vertices");
  SparseMatrix out = skeleton_;
  std::fill(out.values().begin(), out.values().end(), 0.0);
  auto& vals = out.values();
  size_t k = 0;
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const ElementGeometry& g = geom[t];
    for (int e = 0; e < 6; ++e) {
      const auto [a, b] = kTetEdges[e];
      const double w = g.edge_weight[e];
      const double tq = q * (phi_full[tet[a]] - phi_full[tet[b]]);
      const double bp = bernoulli(tq);
      const double bm = bernoulli(-tq);
      vals[slot_[k]] += w * bm;
      vals[slot_[k + 1]] -= w * bp;
      vals[slot_[k + 2]] += w * bp;
      vals[slot_[k + 3]] -= w * bm;
      k += 4;
    }
  }
  return out;
}

SparseMatrix assemble_eafe(const Mesh& mesh, const DofMap& dofmap, std::span<const double> phi_full,
                           double q) {
  (void)dofmap;
  const auto geom = compute_geometry(mesh);
  return EafeAssembler(mesh).assemble(mesh, geom, phi_full, q);
}

SparseMatrix assemble_np_block(const Mesh& mesh, const DofMap& dofmap, std::span<const double> phi_full,
                               double q, double tau) {
  if (tau < 0.0) throw std::invalid_argument("assemble_np_block: tau must be >= 0");
  SparseMatrix a = assemble_eafe(mesh, dofmap, phi_full, q);
  if (tau == 0.0) return a;
  for (double& v : a.values()) v *= tau;
  const auto mass = assemble_lumped_mass_full(mesh);
  std::vector<Triplet> diag;
  diag.reserve(mass.size());
  for (size_t i = 0; i < mass.size(); ++i)
    diag.push_back({static_cast<int>(i), static_cast<int>(i), mass[i]});
  // merge tau*Ā with the mass diagonal through the triplet path
  for (int i = 0; i < a.rows(); ++i)
    for (int k = a.row_ptr()[i]; k < a.row_ptr()[static_cast<size_t>(i) + 1]; ++k)
      diag.push_back({i, a.col_idx()[k], a.values()[k]});
  return SparseMatrix::from_triplets(a.rows(), a.cols(), diag);
}

DirichletSplit eliminate_dirichlet(const SparseMatrix& full, const DofMap& dofmap,
                                   std::span<const double> boundary_values_full) {
  const int nv = full.rows();
  if (static_cast<int>(dofmap.interior_index.size()) != nv ||
      static_cast<int>(boundary_values_full.size()) != nv)
    throw std::invalid_argument("eliminate_dirichlet: size mismatch");

  DirichletSplit out;
  out.lift.assign(dofmap.n_interior, 0.0);
  std::vector<int> row_ptr(static_cast<size_t>(dofmap.n_interior) + 1, 0);
  std::vector<int> col;
  std::vector<double> val;
  col.reserve(full.nnz());
  val.reserve(full.nnz());
  for (int v = 0; v < nv; ++v) {
    const int i = dofmap.interior_index[v];
    if (i < 0) continue;
    for (int k = full.row_ptr()[v]; k < full.row_ptr()[static_cast<size_t>(v) + 1]; ++k) {
      const int w = full.col_idx()[k];
      const int j = dofmap.interior_index[w];
      if (j >= 0) {
        col.push_back(j);
        val.push_back(full.values()[k]);
      } else {
        out.lift[i] += full.values()[k] * boundary_values_full[w];
      }
    }
    row_ptr[static_cast<size_t>(i) + 1] = static_cast<int>(col.size());
  }
  // interior indices ascend with vertex ids, so columns stay sorted per row
  out.interior = SparseMatrix::from_csr(dofmap.n_interior, dofmap.n_interior, std::move(row_ptr),
                                        std::move(col), std::move(val));
  return out;
}

namespace {

Vec3 quad_point_position(const Mesh& mesh, const std::array<int, 4>& tet, const QuadPoint& qp) {
  Vec3 x{0, 0, 0};
  for (int a = 0; a < 4; ++a) x = x + mesh.vertices[tet[a]] * qp.bary[a];
  return x;
}

std::vector<double> sample_boundary(const Mesh& mesh, const ScalarField& g) {
  std::vector<double> out(mesh.vertices.size(), 0.0);
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (mesh.boundary_flag[v]) out[v] = g(mesh.vertices[v]);
  return out;
}

}  // namespace

void assemble_loads(const Mesh& mesh, const DofMap& dofmap, const PnpCoefficients& coeffs,
                    std::vector<double>& F_phi, std::vector<double>& G1, std::vector<double>& G2) {
  F_phi.assign(dofmap.n_interior, 0.0);
  G1.assign(dofmap.n_interior, 0.0);
  G2.assign(dofmap.n_interior, 0.0);
  const auto rule = tet_rule_order2();
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const double vol = mesh.tet_volume(t);
    for (const QuadPoint& qp : rule) {
      const Vec3 x = quad_point_position(mesh, tet, qp);
      const double wf = coeffs.f ? coeffs.f(x) : 0.0;
      const double w1 = coeffs.F1 ? coeffs.F1(x) : 0.0;
      const double w2 = coeffs.F2 ? coeffs.F2(x) : 0.0;
      for (int a = 0; a < 4; ++a) {
        const int i = dofmap.interior_index[tet[a]];
        if (i < 0) continue;
        const double scale = vol * qp.weight * qp.bary[a];
        F_phi[i] += scale * wf;
        G1[i] += scale * w1;
        G2[i] += scale * w2;
      }
    }
  }
  // stiffness lifting of the potential trace; the lumped coupling block has
  // no interior-boundary entries, so no mass lifting appears here
  const auto geom = compute_geometry(mesh);
  const auto a_full = assemble_laplacian_full(mesh, geom);
  const auto g_u = sample_boundary(mesh, coeffs.g_u);
  const auto split = eliminate_dirichlet(a_full, dofmap, g_u);
  for (int i = 0; i < dofmap.n_interior; ++i) F_phi[i] -= split.lift[i];
}

std::vector<double> phi_full_from_interior(const Mesh& mesh, const DofMap& dofmap,
                                           std::span<const double> phi_interior,
                                           std::span<const double> boundary_values_full) {
  std::vector<double> out(mesh.vertices.size());
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const int i = dofmap.interior_index[v];
    out[v] = i >= 0 ? phi_interior[i] : boundary_values_full[v];
  }
  return out;
}

AssembledBlocks assemble_blocks(const Mesh& mesh, const DofMap& dofmap, const PnpCoefficients& coeffs) {
  if (!coeffs.g_u || !coeffs.g_p || !coeffs.g_n)
    throw std::invalid_argument("assemble_blocks: Dirichlet traces g_u, g_p, g_n are required");
  AssembledBlocks b;
  b.geom = compute_geometry(mesh);
  b.eafe = EafeAssembler(mesh);
  b.lumped_mass_full = assemble_lumped_mass_full(mesh);
  b.g_u_full = sample_boundary(mesh, coeffs.g_u);
  b.g_p_full = sample_boundary(mesh, coeffs.g_p);
  b.g_n_full = sample_boundary(mesh, coeffs.g_n);

  const auto a_full = assemble_laplacian_full(mesh, b.geom);
  auto split = eliminate_dirichlet(a_full, dofmap, b.g_u_full);
  b.A_phi = std::move(split.interior);

  b.M.assign(dofmap.n_interior, 0.0);
  for (int v = 0; v < mesh.n_vertices(); ++v) {
    const int i = dofmap.interior_index[v];
    if (i >= 0) b.M[i] = b.lumped_mass_full[v];
  }

  assemble_loads(mesh, dofmap, coeffs, b.F_phi, b.G1, b.G2);
  return b;
}

std::vector<double> full_residual(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                                  const PnpCoefficients& coeffs, const SystemState& state) {
  const int n = dofmap.n_interior;
  if (state.size() != n || static_cast<int>(state.p1.size()) != n ||
      static_cast<int>(state.p2.size()) != n)
    throw std::invalid_argument("full_residual: state size mismatch");

  std::vector<double> r(3 * static_cast<size_t>(n));

  const auto a_phi_u = blocks.A_phi.matvec(state.phi);
  for (int i = 0; i < n; ++i)
    r[i] = blocks.F_phi[i] - a_phi_u[i] +
           blocks.M[i] * (coeffs.q[0] * state.p1[i] + coeffs.q[1] * state.p2[i]);

  auto w_full = phi_full_from_interior(mesh, dofmap, state.phi, blocks.g_u_full);
  for (double& v : w_full) v *= coeffs.c_lambda;

  const std::array<std::span<const double>, 2> conc = {state.p1, state.p2};
  const std::array<std::span<const double>, 2> traces = {blocks.g_p_full, blocks.g_n_full};
  const std::array<std::span<const double>, 2> loads = {blocks.G1, blocks.G2};
  for (int sp = 0; sp < 2; ++sp) {
    const auto a_full = blocks.eafe.assemble(mesh, blocks.geom, w_full, coeffs.q[sp]);
    const auto split = eliminate_dirichlet(a_full, dofmap, traces[sp]);
    const auto ap = split.interior.matvec(conc[sp]);
    double* out = r.data() + static_cast<size_t>(n) * (1 + sp);
    for (int i = 0; i < n; ++i) out[i] = loads[sp][i] - split.lift[i] - ap[i];
  }
  return r;
}

ErrorNorms error_norms(const Mesh& mesh, std::span<const double> u_full, std::span<const double> p_full,
                       std::span<const double> n_full, const ExactSolution& exact) {
  const auto geom = compute_geometry(mesh);
  const auto rule = tet_rule_order5();
  double l2[3] = {0, 0, 0};
  double semi[3] = {0, 0, 0};
  const std::array<std::span<const double>, 3> fields = {u_full, p_full, n_full};
  const std::array<const ScalarField*, 3> vals = {&exact.u, &exact.p, &exact.n};
  const std::array<const VectorField*, 3> grads = {&exact.grad_u, &exact.grad_p, &exact.grad_n};

  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const ElementGeometry& g = geom[t];
    for (int c = 0; c < 3; ++c) {
      Vec3 gh{0, 0, 0};
      for (int a = 0; a < 4; ++a) gh = gh + g.grad[a] * fields[c][tet[a]];
      for (const QuadPoint& qp : rule) {
        const Vec3 x = quad_point_position(mesh, tet, qp);
        double vh = 0.0;
        for (int a = 0; a < 4; ++a) vh += qp.bary[a] * fields[c][tet[a]];
        const double dv = vh - (*vals[c])(x);
        const Vec3 dg = gh - (*grads[c])(x);
        l2[c] += g.volume * qp.weight * dv * dv;
        semi[c] += g.volume * qp.weight * dot(dg, dg);
      }
    }
  }
  ErrorNorms e;
  e.u_l2 = std::sqrt(l2[0]);
  e.p_l2 = std::sqrt(l2[1]);
  e.n_l2 = std::sqrt(l2[2]);
  e.u_h1 = std::sqrt(l2[0] + semi[0]);
  e.p_h1 = std::sqrt(l2[1] + semi[1]);
  e.n_h1 = std::sqrt(l2[2] + semi[2]);
  return e;
}

}  // namespace pnp
