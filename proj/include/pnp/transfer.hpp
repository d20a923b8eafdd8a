#ifndef PNP_TRANSFER_HPP
#define PNP_TRANSFER_HPP

#include <optional>
#include <utility>

#include "pnp/assembly.hpp"

namespace pnp {

/// Strength-of-connection thresholds and the number of coarsening passes
/// merged into one composite level.
struct StrengthParams {
  double theta1 = 0.25;
  double theta2 = 1.0;  // 1 disables the row-sum cutoff
  int passes = 2;
};

struct CfMarker {
  std::vector<signed char> label;  // +1 coarse, -1 fine

  int size() const { return static_cast<int>(label.size()); }
  int n_coarse() const;
  bool is_coarse(int i) const { return label[i] > 0; }
  /// Position of each C node among the C nodes (ascending), -1 for F nodes.
  std::vector<int> coarse_index() const;
};

enum class TransferKind { geometric, algebraic };

/// Prolongation/restriction pair plus the row-normalized dof restriction and
/// the coarse Poisson/mass blocks. Geometric levels carry their coarse mesh;
/// the coarse blocks are rediscretized there and Galerkin products otherwise.
struct TransferLevel {
  TransferKind kind = TransferKind::geometric;
  SparseMatrix P;
  SparseMatrix R;    // P^T
  SparseMatrix R_u;  // rows sum to one
  SparseMatrix A_phi_coarse;
  SparseMatrix M_coarse;  // diagonal for geometric levels, general otherwise
  std::optional<Mesh> coarse_mesh;
  std::optional<DofMap> coarse_dofmap;
  CfMarker cf;  // algebraic levels: composite fine-node marker

  int n_fine() const { return P.rows(); }
  int n_coarse() const { return P.cols(); }
};

/// FE interpolation from the coarse interior space into the fine one;
/// weights are the parent-element barycentric coordinates.
SparseMatrix geometric_prolongation(const Mesh& coarse, const DofMap& coarse_dofs, const Mesh& fine,
                                    const DofMap& fine_dofs, const ParentMap& parents);

SparseMatrix row_normalize_restriction(const SparseMatrix& r);

/// Boolean strong-dependency pattern: sign-split thresholding by theta1 with
/// an optional row-sum cutoff theta2 that empties nearly-decoupled rows.
SparseMatrix strength_matrix(const SparseMatrix& a, const StrengthParams& params);

/// Classical two-pass C/F splitting; the result always satisfies condition C1
/// (every strong F-F pair shares a strong C point) and greedily aims for C2.
CfMarker cf_split(const SparseMatrix& s);

/// Standard interpolation: identity on C rows; F rows distribute strong-F
/// couplings over the interpolatory set with sign-filtered weights.
SparseMatrix rs_interpolation(const SparseMatrix& a, const SparseMatrix& s, const CfMarker& cf);

struct MultilevelResult {
  SparseMatrix P;                         // composite prolongation
  std::vector<signed char> cf_composite;  // +1 for fine nodes surviving to the coarsest level
  int levels = 0;                         // passes actually performed
};

/// Repeats strength -> split -> interpolate -> Galerkin for params.passes
/// levels and multiplies the interpolations together.
MultilevelResult compose_multilevel(const SparseMatrix& a, const StrengthParams& params);

/// (R A P, R M P) with R = P^T.
std::pair<SparseMatrix, SparseMatrix> galerkin_blocks(const SparseMatrix& a_phi, const SparseMatrix& m,
                                                      const SparseMatrix& p);

TransferLevel build_geometric_level(const Mesh& coarse, const Mesh& fine, const DofMap& fine_dofs,
                                    const ParentMap& parents);

TransferLevel build_algebraic_level(const SparseMatrix& a_phi_fine, std::span<const double> m_fine_diag,
                                    const StrengthParams& params);

}  // namespace pnp

#endif
