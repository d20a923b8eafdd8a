#ifndef PNP_FAS_HPP
#define PNP_FAS_HPP

#include "pnp/gummel.hpp"
#include "pnp/transfer.hpp"

namespace pnp {

enum class FasMode { fas, tg };
enum class CoarseEafePath { rediscretize, galerkin };

/// Two-level cycle configuration. tg mode degenerates the cycle to the
/// two-grid method: zero initial state, no pre-smoothing, one post-smoothing
/// sweep, a single cycle.
struct FasContext {
  TransferLevel level;
  int nu1 = 1;
  int nu2 = 1;
  SolverSettings coarse_settings;
  FasMode mode = FasMode::fas;
  CoarseEafePath path = CoarseEafePath::rediscretize;
};

FasContext make_fas_context(TransferLevel level, const SolverSettings& settings,
                            FasMode mode = FasMode::fas, int nu1 = 1, int nu2 = 1);

/// Coarse operator A2(.) acting on interior coarse dofs. The concentration
/// blocks are rebuilt at every new coarse potential: assembled directly on
/// the coarse mesh (rediscretize) or as R A1(P phi) P from the fine level
/// (galerkin). Boundary data enters only through the potential lift used for
/// EAFE assembly; all load lifting stays folded into the fine right-hand side
/// and travels through the restricted residual.
class CoarseSystem {
public:
  CoarseSystem(const FasContext& ctx, const Mesh& fine_mesh, const DofMap& fine_dofs,
               const AssembledBlocks& fine_blocks, const PnpCoefficients& coeffs);

  int n_coarse() const { return n_coarse_; }
  const FasContext& context() const { return *ctx_; }

  /// A2(U)U: Poisson rows A2 phi + Mbar2 p, concentration rows A2i(phi) pi.
  std::vector<double> apply(const SystemState& u) const;

  std::array<SparseMatrix, 2> species_matrices(std::span<const double> phi_coarse) const;

  std::vector<double> solve_coarse_potential(std::span<const double> rhs) const;
  std::vector<double> mbar_action(const SystemState& u) const;  // -q1 M2 p1 - q2 M2 p2

private:
  const FasContext* ctx_;
  const Mesh* fine_mesh_;
  const DofMap* fine_dofs_;
  const AssembledBlocks* fine_blocks_;
  const PnpCoefficients* coeffs_;
  LuFactorization poisson_lu_;
  int n_coarse_ = 0;
  // rediscretize path caches
  std::vector<ElementGeometry> coarse_geom_;
  EafeAssembler coarse_eafe_;
  std::vector<double> coarse_g_u_full_;
};

struct CoarseRhs {
  SystemState y2;            // restricted fine approximation
  std::vector<double> tau2;  // A2(y2)y2 + restricted fine residual, length 3 n2
};

CoarseRhs coarse_rhs(const CoarseSystem& cs, const SystemState& fine_state,
                     std::span<const double> fine_residual);

struct CoarseSolveResult {
  SystemState state;
  int iterations = 0;
  std::string failure_reason;  // empty on success; max_iter is accepted, not a failure
};

/// Decoupled Gummel iteration on the coarse system, started from the given
/// state and stopped on the coarse residual tolerance.
CoarseSolveResult coarse_gummel(const CoarseSystem& cs, std::span<const double> tau2,
                                const SystemState& initial);

std::pair<SystemState, IterationReport> fas_solve(const FasContext& ctx, const Mesh& mesh,
                                                  const DofMap& dofmap, const AssembledBlocks& blocks,
                                                  const PnpCoefficients& coeffs,
                                                  const SolverSettings& settings,
                                                  std::optional<SystemState> initial = std::nullopt);

}  // namespace pnp

#endif
