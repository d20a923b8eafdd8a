#ifndef PNP_GUMMEL_HPP
#define PNP_GUMMEL_HPP

#include <optional>
#include <string>

#include "pnp/assembly.hpp"

namespace pnp {

enum class GummelVariant { plain, relaxed, accel1, accel2, adaptive };
enum class StoppingMode { residual, increment };

/// One residual band of the adaptive update: active while the previous full
/// residual norm exceeds residual_floor, with relative-change window
/// [theta1, theta2].
struct AdaptiveBand {
  double residual_floor;
  double theta1;
  double theta2;
};

std::vector<AdaptiveBand> adaptive_bands_a();
std::vector<AdaptiveBand> adaptive_bands_b();

struct SolverSettings {
  double tol = 1e-6;
  double tol_coarse = 1e-7;
  int max_iter = 1000;
  double relax_alpha = 0.5;     // fixed under-relaxation factor
  double adaptive_alpha = 0.1;  // seed factor for the adaptive second step
  double theta_alpha = 1e-3;    // probe threshold deciding accel2 delegation
  std::vector<AdaptiveBand> bands = adaptive_bands_a();
  double divergence_cap = 1e12;
  std::optional<double> force_alpha;  // test hook: overrides every computed α*
};

struct IterationReport {
  bool converged = false;
  int iterations = 0;
  std::vector<double> residual_history;  // residual norms, or increments in increment mode
  std::vector<double> alpha_history;
  std::vector<int> coarse_iterations;  // filled by the FAS driver
  double wall_time_s = 0.0;
  std::string failure_reason;
};

/// Minimizer of ||α r_hat + (1-α) r_prev||² over [0,1]; returns 1 in the
/// degenerate r_hat == r_prev case.
double alpha_star(std::span<const double> r_hat, std::span<const double> r_prev);

/// Decoupled fixed-point machinery over one assembled system. Owns the
/// Poisson factorization (the stiffness block never changes); concentration
/// operators are reassembled at every new potential.
class GummelOperator {
public:
  GummelOperator(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                 const PnpCoefficients& coeffs,
                 std::optional<SystemState> prev_time_state = std::nullopt);

  struct SpeciesSystem {
    SparseMatrix matrix;       // interior operator at the given potential
    std::vector<double> rhs;   // load minus Dirichlet lifting
  };

  std::vector<double> solve_potential(const SystemState& state) const;
  std::array<SpeciesSystem, 2> species_systems(std::span<const double> phi_interior) const;
  SystemState step(const SystemState& state) const;

  std::vector<double> poisson_residual(const SystemState& state) const;
  std::vector<double> residual_vector(const SystemState& state) const;

  /// Lumped-mass weighted L2 norms over interior dofs.
  double increment_norm(std::span<const double> a, std::span<const double> b) const;
  double field_norm(std::span<const double> a) const;

  int n_interior() const { return dofmap_->n_interior; }
  const AssembledBlocks& blocks() const { return *blocks_; }
  const PnpCoefficients& coeffs() const { return *coeffs_; }

private:
  const Mesh* mesh_;
  const DofMap* dofmap_;
  const AssembledBlocks* blocks_;
  const PnpCoefficients* coeffs_;
  std::optional<SystemState> prev_time_;
  LuFactorization poisson_lu_;
};

/// Residual composition from systems already assembled at the state's
/// potential (avoids a redundant assembly in solver loops).
std::vector<double> residual_from_systems(const AssembledBlocks& blocks, const PnpCoefficients& coeffs,
                                          const SystemState& state, const SparseMatrix& a1,
                                          std::span<const double> rhs1, const SparseMatrix& a2,
                                          std::span<const double> rhs2);

/// One plain Gummel sweep: Poisson solve, reassembly, two concentration solves.
SystemState gummel_step(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                        const PnpCoefficients& coeffs, const SystemState& state);

bool stopping_test(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                   const PnpCoefficients& coeffs, const SystemState& state, const SystemState& prev_state,
                   const SolverSettings& settings, StoppingMode mode);

StoppingMode default_stopping_mode(GummelVariant variant);

std::pair<SystemState, IterationReport> gummel_solve(
    const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks, const PnpCoefficients& coeffs,
    const SolverSettings& settings, GummelVariant variant,
    std::optional<SystemState> initial = std::nullopt, std::optional<StoppingMode> mode = std::nullopt);

}  // namespace pnp

#endif
