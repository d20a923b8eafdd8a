#include "pnp/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <set>

namespace pnp {

int CfMarker::n_coarse() const {
  int c = 0;
  for (signed char l : label) c += l > 0;
  return c;
}

std::vector<int> CfMarker::coarse_index() const {
  std::vector<int> idx(label.size(), -1);
  int c = 0;
  for (size_t i = 0; i < label.size(); ++i)
    if (label[i] > 0) idx[i] = c++;
  return idx;
}

SparseMatrix geometric_prolongation(const Mesh& coarse, const DofMap& coarse_dofs, const Mesh& fine,
                                    const DofMap& fine_dofs, const ParentMap& parents) {
  if (parents.entries.size() != fine.vertices.size())
    throw std::invalid_argument("geometric_prolongation: parent map does not match the fine mesh");
  std::vector<Triplet> ts;
  for (int v = 0; v < fine.n_vertices(); ++v) {
    const int row = fine_dofs.interior_index[v];
    if (row < 0) continue;
    const auto& entry = parents.entries[v];
    if (entry.coarse_tet < 0 || entry.coarse_tet >= coarse.n_tets())
      throw std::invalid_argument("geometric_prolongation: non-nested input (bad parent tet)");
    const auto& tet = coarse.tets[entry.coarse_tet];
    for (int a = 0; a < 4; ++a) {
      const double w = entry.bary[a];
      if (w == 0.0) continue;
      if (w < -1e-12 || w > 1.0 + 1e-12)
        throw std::invalid_argument("geometric_prolongation: non-nested input (barycentric weight)");
      const int col = coarse_dofs.interior_index[tet[a]];
      if (col >= 0) ts.push_back({row, col, w});
    }
  }
  return SparseMatrix::from_triplets(fine_dofs.n_interior, coarse_dofs.n_interior, ts);
}

SparseMatrix row_normalize_restriction(const SparseMatrix& r) {
  SparseMatrix out = r;
  auto& vals = out.values();
  for (int i = 0; i < r.rows(); ++i) {
    double sum = 0.0;
    for (int k = r.row_ptr()[i]; k < r.row_ptr()[static_cast<size_t>(i) + 1]; ++k)
      sum += r.values()[k];
    if (r.row_ptr()[i] == r.row_ptr()[static_cast<size_t>(i) + 1] || sum == 0.0)
      throw std::invalid_argument("row_normalize_restriction: zero row " + std::to_string(i));
    for (int k = r.row_ptr()[i]; k < r.row_ptr()[static_cast<size_t>(i) + 1]; ++k)
      vals[k] = r.values()[k] / sum;
  }
  return out;
}

SparseMatrix strength_matrix(const SparseMatrix& a, const StrengthParams& params) {
  if (a.rows() != a.cols()) throw std::invalid_argument("strength_matrix: matrix not square");
  if (!(params.theta1 > 0.0 && params.theta1 <= 1.0))
    throw std::invalid_argument("strength_matrix: theta1 must be in (0,1]");
  if (!(params.theta2 > 0.0 && params.theta2 <= 1.0))
    throw std::invalid_argument("strength_matrix: theta2 must be in (0,1]");

  std::vector<Triplet> ts;
  for (int i = 0; i < a.rows(); ++i) {
    const int begin = a.row_ptr()[i];
    const int end = a.row_ptr()[static_cast<size_t>(i) + 1];
    double diag = 0.0, row_sum = 0.0;
    double off_max = -std::numeric_limits<double>::infinity();
    double off_min = std::numeric_limits<double>::infinity();
    bool has_off = false;
    for (int k = begin; k < end; ++k) {
      const double v = a.values()[k];
      row_sum += v;
      if (a.col_idx()[k] == i) {
        diag = v;
      } else {
        has_off = true;
        off_max = std::max(off_max, v);
        off_min = std::min(off_min, v);
      }
    }
    if (!has_off) continue;
    if (params.theta2 < 1.0) {
      const double ratio = diag != 0.0 ? std::abs(row_sum / diag)
                                       : std::numeric_limits<double>::infinity();
      if (ratio > params.theta2) continue;  // nearly decoupled row: no strong set
    }
    for (int k = begin; k < end; ++k) {
      const int j = a.col_idx()[k];
      if (j == i) continue;
      const double v = a.values()[k];
      const bool strong = diag < 0.0 ? v >= params.theta1 * off_max : v <= params.theta1 * off_min;
      if (strong) ts.push_back({i, j, 1.0});
    }
  }
  return SparseMatrix::from_triplets(a.rows(), a.cols(), ts);
}

namespace {

std::vector<std::vector<int>> influence_lists(const SparseMatrix& s) {
  std::vector<std::vector<int>> inf(s.rows());
  for (int i = 0; i < s.rows(); ++i)
    for (int k = s.row_ptr()[i]; k < s.row_ptr()[static_cast<size_t>(i) + 1]; ++k)
      inf[s.col_idx()[k]].push_back(i);  // i depends on col -> col influences i
  return inf;
}

}  // namespace

CfMarker cf_split(const SparseMatrix& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("cf_split: pattern not square");
  const int n = s.rows();
  const auto strong = [&](int i) {
    return std::span<const int>(s.col_idx().data() + s.row_ptr()[i],
                                s.col_idx().data() + s.row_ptr()[static_cast<size_t>(i) + 1]);
  };
  const auto influenced = influence_lists(s);

  CfMarker cf;
  cf.label.assign(n, 0);
  std::vector<int> lambda(n);
  for (int i = 0; i < n; ++i) lambda[i] = static_cast<int>(influenced[i].size());

  // bucket queue keyed by influence count, lowest index first inside a bucket
  std::set<std::pair<int, int>> queue;  // (-lambda, node)
  for (int i = 0; i < n; ++i) queue.insert({-lambda[i], i});
  const auto requeue = [&](int node, int delta) {
    queue.erase({-lambda[node], node});
    lambda[node] += delta;
    queue.insert({-lambda[node], node});
  };

  while (!queue.empty()) {
    const auto [neg_lambda, c] = *queue.begin();
    if (neg_lambda >= 0) break;  // nobody depends on the rest
    queue.erase(queue.begin());
    cf.label[c] = 1;
    for (int j : influenced[c]) {
      if (cf.label[j] != 0) continue;
      queue.erase({-lambda[j], j});
      cf.label[j] = -1;
      for (int k : strong(j))
        if (cf.label[k] == 0) requeue(k, +1);
    }
    for (int j : strong(c))
      if (cf.label[j] == 0) requeue(j, -1);
  }
  for (int i = 0; i < n; ++i)
    if (cf.label[i] == 0) cf.label[i] = -1;

  // second pass: enforce C1 exactly
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < n; ++i) {
      if (cf.label[i] > 0) continue;
      const auto si = strong(i);
      if (si.empty()) continue;
      bool has_c = false;
      for (int k : si) has_c |= cf.label[k] > 0;
      if (!has_c) {
        cf.label[i] = 1;
        changed = true;
        continue;
      }
      for (int j : si) {
        if (cf.label[j] > 0) continue;
        // need a common point k in S_i ∩ C with k in S_j
        bool ok = false;
        for (int k : si) {
          if (cf.label[k] <= 0) continue;
          const auto sj = strong(j);
          if (std::binary_search(sj.begin(), sj.end(), k)) {
            ok = true;
            break;
          }
        }
        if (!ok) {
          cf.label[j] = 1;
          changed = true;
        }
      }
    }
  }
  return cf;
}

SparseMatrix rs_interpolation(const SparseMatrix& a, const SparseMatrix& s, const CfMarker& cf) {
  const int n = a.rows();
  if (s.rows() != n || cf.size() != n)
    throw std::invalid_argument("rs_interpolation: inconsistent inputs");
  const auto cidx = cf.coarse_index();
  const int nc = cf.n_coarse();

  std::vector<Triplet> ts;
  std::vector<char> in_ci(n, 0);
  std::vector<char> in_si(n, 0);
  std::vector<double> num(n, 0.0);
  int fallbacks = 0;

  for (int i = 0; i < n; ++i) {
    if (cf.is_coarse(i)) {
      ts.push_back({i, cidx[i], 1.0});
      continue;
    }
    const auto si_begin = s.col_idx().begin() + s.row_ptr()[i];
    const auto si_end = s.col_idx().begin() + s.row_ptr()[static_cast<size_t>(i) + 1];
    std::vector<int> ci;  // strong C neighbors
    for (auto it = si_begin; it != si_end; ++it) {
      in_si[*it] = 1;
      if (cf.is_coarse(*it)) {
        ci.push_back(*it);
        in_ci[*it] = 1;
      }
    }
    if (ci.empty()) {
      // no interpolatory set: inject zero
      ++fallbacks;
      for (auto it = si_begin; it != si_end; ++it) in_si[*it] = 0;
      continue;
    }

    double diag = 0.0;
    double denom_weak = 0.0;
    for (int j : ci) num[j] = 0.0;
    // first sweep: diagonal, weak couplings, direct C couplings
    const int begin = a.row_ptr()[i];
    const int end = a.row_ptr()[static_cast<size_t>(i) + 1];
    for (int k = begin; k < end; ++k) {
      const int j = a.col_idx()[k];
      const double v = a.values()[k];
      if (j == i) {
        diag = v;
      } else if (!in_si[j]) {
        denom_weak += v;  // weak neighbor, C or F
      } else if (in_ci[j]) {
        num[j] += v;
      }
    }
    // second sweep: distribute strong-F couplings over C_i
    for (int k = begin; k < end; ++k) {
      const int j = a.col_idx()[k];
      if (j == i || !in_si[j] || in_ci[j]) continue;
      const double a_ik = a.values()[k];
      const double diag_k = a.coeff(j, j);
      double dist_sum = 0.0;
      for (int kk = a.row_ptr()[j]; kk < a.row_ptr()[static_cast<size_t>(j) + 1]; ++kk) {
        const int m = a.col_idx()[kk];
        if (!in_ci[m]) continue;
        const double v = a.values()[kk];
        if ((v >= 0.0) != (diag_k >= 0.0)) dist_sum += v;
      }
      if (dist_sum == 0.0) {
        denom_weak += a_ik;  // nothing to distribute to: lump with the diagonal
        continue;
      }
      for (int kk = a.row_ptr()[j]; kk < a.row_ptr()[static_cast<size_t>(j) + 1]; ++kk) {
        const int m = a.col_idx()[kk];
        if (!in_ci[m]) continue;
        const double v = a.values()[kk];
        if ((v >= 0.0) != (diag_k >= 0.0)) num[m] += a_ik * v / dist_sum;
      }
    }
    const double denom = diag + denom_weak;
    for (int j : ci)
      if (num[j] != 0.0) ts.push_back({i, cidx[j], -num[j] / denom});

    for (auto it = si_begin; it != si_end; ++it) in_si[*it] = 0;
    for (int j : ci) in_ci[j] = 0;
  }
  if (fallbacks > 0)
    std::cerr << "rs_interpolation: " << fallbacks
              << " F node(s) had no interpolatory set; injected zero\n";
  return SparseMatrix::from_triplets(n, nc, ts);
}

MultilevelResult compose_multilevel(const SparseMatrix& a, const StrengthParams& params) {
  if (params.passes < 1) throw std::invalid_argument("compose_multilevel: passes must be >= 1");
  MultilevelResult out;
  out.cf_composite.assign(a.rows(), -1);

  SparseMatrix level_matrix = a;
  SparseMatrix composite;
  std::vector<int> fine_of(a.rows());
  std::iota(fine_of.begin(), fine_of.end(), 0);

  for (int pass = 0; pass < params.passes; ++pass) {
    const SparseMatrix strength = strength_matrix(level_matrix, params);
    const CfMarker cf = cf_split(strength);
    const int nc = cf.n_coarse();
    if (nc == 0 || nc == level_matrix.rows()) break;  // stagnation: keep previous levels
    const SparseMatrix p = rs_interpolation(level_matrix, strength, cf);
    composite = out.levels == 0 ? p : multiply(composite, p);
    level_matrix = triple_product(p.transpose(), level_matrix, p);
    std::vector<int> next_fine;
    next_fine.reserve(nc);
    for (int i = 0; i < cf.size(); ++i)
      if (cf.is_coarse(i)) next_fine.push_back(fine_of[i]);
    fine_of = std::move(next_fine);
    ++out.levels;
  }

  if (out.levels == 0) {
    out.P = SparseMatrix::identity(a.rows());
    std::fill(out.cf_composite.begin(), out.cf_composite.end(), 1);
    return out;
  }
  out.P = std::move(composite);
  for (int v : fine_of) out.cf_composite[v] = 1;
  return out;
}

std::pair<SparseMatrix, SparseMatrix> galerkin_blocks(const SparseMatrix& a_phi, const SparseMatrix& m,
                                                      const SparseMatrix& p) {
  if (a_phi.cols() != p.rows() || m.cols() != p.rows())
    throw std::invalid_argument("galerkin_blocks: dimension mismatch");
  const SparseMatrix r = p.transpose();
  return {triple_product(r, a_phi, p), triple_product(r, m, p)};
}

TransferLevel build_geometric_level(const Mesh& coarse, const Mesh& fine, const DofMap& fine_dofs,
                                    const ParentMap& parents) {
  TransferLevel lvl;
  lvl.kind = TransferKind::geometric;
  lvl.coarse_mesh = coarse;
  lvl.coarse_dofmap = DofMap::build(coarse);
  lvl.P = geometric_prolongation(coarse, *lvl.coarse_dofmap, fine, fine_dofs, parents);
  lvl.R = lvl.P.transpose();
  lvl.R_u = row_normalize_restriction(lvl.R);
  lvl.A_phi_coarse = assemble_laplacian(coarse, *lvl.coarse_dofmap);
  const auto mass = assemble_lumped_mass(coarse, *lvl.coarse_dofmap);
  lvl.M_coarse = SparseMatrix::diagonal(mass);
  return lvl;
}

TransferLevel build_algebraic_level(const SparseMatrix& a_phi_fine, std::span<const double> m_fine_diag,
                                    const StrengthParams& params) {
  TransferLevel lvl;
  lvl.kind = TransferKind::algebraic;
  MultilevelResult ml = compose_multilevel(a_phi_fine, params);
  lvl.P = std::move(ml.P);
  lvl.R = lvl.P.transpose();
  lvl.R_u = row_normalize_restriction(lvl.R);
  auto [ac, mc] = galerkin_blocks(a_phi_fine, SparseMatrix::diagonal(m_fine_diag), lvl.P);
  lvl.A_phi_coarse = std::move(ac);
  lvl.M_coarse = std::move(mc);
  lvl.cf.label = std::move(ml.cf_composite);
  return lvl;
}

}  // namespace pnp
