#ifndef PNP_ASSEMBLY_HPP
#define PNP_ASSEMBLY_HPP

#include <array>
#include <functional>
#include <span>

#include "pnp/mesh.hpp"
#include "pnp/sparse.hpp"

namespace pnp {

/// B(t) = t / (e^t - 1), series-expanded near zero; B(0) = 1.
/// Decays to 0 for t -> +inf and behaves like -t for t -> -inf, so it is
/// overflow-safe for arbitrarily strong fields.
double bernoulli(double t);

using ScalarField = std::function<double(const Vec3&)>;
using VectorField = std::function<Vec3(const Vec3&)>;

/// Problem data of the coupled system
///   -Δφ - Σ qⁱ pⁱ = f,   -∇·(∇pⁱ + qⁱ pⁱ ∇(c_λ φ)) = Fⁱ
/// with Dirichlet traces g_u, g_p, g_n. tau = 0 selects the steady system;
/// tau > 0 selects one backward-Euler step of size tau.
struct PnpCoefficients {
  std::array<double, 2> q{+1.0, -1.0};
  double c_lambda = 1.79;
  double tau = 0.0;
  ScalarField f;
  ScalarField F1, F2;
  ScalarField g_u, g_p, g_n;
};

struct ExactSolution {
  ScalarField u, p, n;
  VectorField grad_u, grad_p, grad_n;
};

/// Coupled unknowns over interior degrees of freedom.
struct SystemState {
  std::vector<double> phi, p1, p2;

  static SystemState zeros(int n_interior);
  int size() const { return static_cast<int>(phi.size()); }
};

/// Per-element quantities reused by every assembly pass: volume, constant
/// barycentric gradients, and the EAFE edge weights
///   ω_E = -(∇λ_a, ∇λ_b)_K  for the local edges (0,1),(0,2),(0,3),(1,2),(1,3),(2,3).
struct ElementGeometry {
  double volume = 0.0;
  std::array<Vec3, 4> grad{};
  std::array<double, 6> edge_weight{};
};

constexpr std::array<std::array<int, 2>, 6> kTetEdges = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};

std::vector<ElementGeometry> compute_geometry(const Mesh& mesh);

/// Quadrature on the reference tetrahedron (barycentric points, weights
/// summing to 1).
struct QuadPoint {
  std::array<double, 4> bary;
  double weight;
};
std::span<const QuadPoint> tet_rule_order2();  // 4 points
std::span<const QuadPoint> tet_rule_order5();  // 14 points

/// Full-vertex P1 stiffness (∇ψ_j, ∇ψ_i); symmetric with zero row sums.
SparseMatrix assemble_laplacian_full(const Mesh& mesh, const std::vector<ElementGeometry>& geom);

/// Interior-interior stiffness block.
SparseMatrix assemble_laplacian(const Mesh& mesh, const DofMap& dofmap);

/// Lumped mass: each tet contributes |K|/4 to each of its vertices.
std::vector<double> assemble_lumped_mass_full(const Mesh& mesh);
std::vector<double> assemble_lumped_mass(const Mesh& mesh, const DofMap& dofmap);

/// One-species EAFE operator over all vertices, assembled into a fixed
/// sparsity pattern. For the edge (a,b) with t = q(φ_a - φ_b) the stencil is
///   A[a][a] += ω B(-t),  A[a][b] -= ω B(t),
///   A[b][b] += ω B(t),   A[b][a] -= ω B(-t),
/// which reduces to the stiffness matrix at φ ≡ 0 and annihilates e^{-qφ}
/// exactly (the Slotboom kernel).
class EafeAssembler {
public:
  EafeAssembler() = default;
  explicit EafeAssembler(const Mesh& mesh);

  SparseMatrix assemble(const Mesh& mesh, const std::vector<ElementGeometry>& geom,
                        std::span<const double> phi_full, double q) const;

private:
  SparseMatrix skeleton_;
  std::vector<int> slot_;  // 4 slots per element edge: aa, ab, bb, ba
};

/// Convenience wrapper building the pattern on the fly.
SparseMatrix assemble_eafe(const Mesh& mesh, const DofMap& dofmap, std::span<const double> phi_full,
                           double q);

/// Concentration operator: Ā(φ) when tau = 0, M + tau·Ā(φ) for backward
/// Euler. phi_full is expected pre-scaled by c_λ. Full-vertex matrix.
SparseMatrix assemble_np_block(const Mesh& mesh, const DofMap& dofmap, std::span<const double> phi_full,
                               double q, double tau);

/// Split of a full-vertex operator into the interior block plus the
/// boundary-coupling action on known Dirichlet values (to be subtracted from
/// the load).
struct DirichletSplit {
  SparseMatrix interior;
  std::vector<double> lift;
};
DirichletSplit eliminate_dirichlet(const SparseMatrix& full, const DofMap& dofmap,
                                   std::span<const double> boundary_values_full);

/// Everything the solvers need from one mesh + coefficient set.
struct AssembledBlocks {
  SparseMatrix A_phi;               // interior Poisson stiffness
  std::vector<double> M;            // interior lumped mass diagonal
  std::vector<double> F_phi;        // Poisson load including stiffness lifting
  std::vector<double> G1, G2;       // concentration loads (Ā lifting is added per Gummel step)
  std::vector<ElementGeometry> geom;
  EafeAssembler eafe;
  std::vector<double> lumped_mass_full;
  std::vector<double> g_u_full, g_p_full, g_n_full;  // Dirichlet data at boundary vertices
};

AssembledBlocks assemble_blocks(const Mesh& mesh, const DofMap& dofmap, const PnpCoefficients& coeffs);

/// Loads (f,ψ), (F¹,ψ), (F²,ψ) with the stiffness lifting folded into F_phi.
void assemble_loads(const Mesh& mesh, const DofMap& dofmap, const PnpCoefficients& coeffs,
                    std::vector<double>& F_phi, std::vector<double>& G1, std::vector<double>& G2);

std::vector<double> phi_full_from_interior(const Mesh& mesh, const DofMap& dofmap,
                                           std::span<const double> phi_interior,
                                           std::span<const double> boundary_values_full);

/// Nonlinear residual F(U) - A(U)U of the eliminated system, concatenated as
/// (Φ rows, P¹ rows, P² rows).
std::vector<double> full_residual(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                                  const PnpCoefficients& coeffs, const SystemState& state);

struct ErrorNorms {
  double u_l2 = 0, p_l2 = 0, n_l2 = 0;
  double u_h1 = 0, p_h1 = 0, n_h1 = 0;
};

/// L2 and full H1 error norms of the P1 fields against the exact solution,
/// integrated with the 14-point rule.
ErrorNorms error_norms(const Mesh& mesh, std::span<const double> u_full, std::span<const double> p_full,
                       std::span<const double> n_full, const ExactSolution& exact);

}  // namespace pnp

#endif
