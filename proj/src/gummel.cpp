#include "pnp/gummel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace pnp {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

bool state_finite(const SystemState& s) {
  return all_finite(s.phi) && all_finite(s.p1) && all_finite(s.p2);
}

std::vector<double> blend(std::span<const double> a, std::span<const double> b, double alpha) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < a.size(); ++i) out[i] = alpha * a[i] + (1.0 - alpha) * b[i];
  return out;
}

void validate_settings(const SolverSettings& s) {
  if (!(s.tol > 0.0)) throw std::invalid_argument("SolverSettings: tol must be positive");
  if (s.max_iter < 1) throw std::invalid_argument("SolverSettings: max_iter must be >= 1");
  for (size_t i = 0; i < s.bands.size(); ++i) {
    if (s.bands[i].theta1 > s.bands[i].theta2)
      throw std::invalid_argument("SolverSettings: band theta1 must be <= theta2");
    if (i > 0 && !(s.bands[i].residual_floor < s.bands[i - 1].residual_floor))
      throw std::invalid_argument("SolverSettings: band residual floors must strictly decrease");
  }
}

const AdaptiveBand& select_band(const std::vector<AdaptiveBand>& bands, double residual_norm) {
  for (const AdaptiveBand& b : bands)
    if (residual_norm > b.residual_floor) return b;
  return bands.back();
}

}  // namespace

std::vector<AdaptiveBand> adaptive_bands_a() {
  return {{1e-3, 1e-1, 5e-1}, {1e-4, 1e-2, 1e-1}, {1e-6, 0.0, 100.0}};
}

std::vector<AdaptiveBand> adaptive_bands_b() {
  return {{1e-2, 1e-1, 5e-1}, {1e-3, 1e-2, 1e-1}, {1e-5, 1e-4, 1e-3}, {1e-6, 1e-5, 1e-4}};
}

double alpha_star(std::span<const double> r_hat, std::span<const double> r_prev) {
  if (r_hat.size() != r_prev.size()) throw std::invalid_argument("alpha_star: size mismatch");
  double a = 0.0;
  for (size_t i = 0; i < r_hat.size(); ++i) {
    const double d = r_hat[i] - r_prev[i];
    a += d * d;
  }
  const double rr_hat = dot(r_hat, r_hat);
  const double rr_prev = dot(r_prev, r_prev);
  const double b = 2.0 * (dot(r_hat, r_prev) - rr_prev);
  if (a <= 1e-30 * std::max({rr_hat, rr_prev, 1.0})) return 1.0;
  return std::clamp(-b / (2.0 * a), 0.0, 1.0);
}

GummelOperator::GummelOperator(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                               const PnpCoefficients& coeffs, std::optional<SystemState> prev_time_state)
    : mesh_(&mesh),
      dofmap_(&dofmap),
      blocks_(&blocks),
      coeffs_(&coeffs),
      prev_time_(std::move(prev_time_state)),
      poisson_lu_(blocks.A_phi) {
  if (coeffs.tau > 0.0 && !prev_time_)
    throw std::invalid_argument("GummelOperator: tau > 0 requires the previous time-step state");
}

std::vector<double> GummelOperator::solve_potential(const SystemState& state) const {
  const int n = dofmap_->n_interior;
  std::vector<double> rhs(n);
  for (int i = 0; i < n; ++i)
    rhs[i] = blocks_->F_phi[i] +
             blocks_->M[i] * (coeffs_->q[0] * state.p1[i] + coeffs_->q[1] * state.p2[i]);
  return poisson_lu_.solve(rhs);
}

std::array<GummelOperator::SpeciesSystem, 2> GummelOperator::species_systems(
    std::span<const double> phi_interior) const {
  auto w = phi_full_from_interior(*mesh_, *dofmap_, phi_interior, blocks_->g_u_full);
  for (double& v : w) v *= coeffs_->c_lambda;

  const std::array<std::span<const double>, 2> traces = {blocks_->g_p_full, blocks_->g_n_full};
  const std::array<std::span<const double>, 2> loads = {blocks_->G1, blocks_->G2};
  const std::array<std::span<const double>, 2> prev = {
      prev_time_ ? std::span<const double>(prev_time_->p1) : std::span<const double>(),
      prev_time_ ? std::span<const double>(prev_time_->p2) : std::span<const double>()};

  std::array<SpeciesSystem, 2> out;
  for (int sp = 0; sp < 2; ++sp) {
    auto full = blocks_->eafe.assemble(*mesh_, blocks_->geom, w, coeffs_->q[sp]);
    auto split = eliminate_dirichlet(full, *dofmap_, traces[sp]);
    SpeciesSystem& sys = out[sp];
    sys.rhs.resize(dofmap_->n_interior);
    for (int i = 0; i < dofmap_->n_interior; ++i) sys.rhs[i] = loads[sp][i] - split.lift[i];
    if (coeffs_->tau > 0.0) {
      const double tau = coeffs_->tau;
      auto& vals = split.interior.values();
      for (double& v : vals) v *= tau;
      for (int i = 0; i < dofmap_->n_interior; ++i) {
        // diagonal entry is always present in the EAFE pattern
        for (int k = split.interior.row_ptr()[i]; k < split.interior.row_ptr()[i + 1]; ++k)
          if (split.interior.col_idx()[k] == i) {
            vals[k] += blocks_->M[i];
            break;
          }
        sys.rhs[i] = blocks_->M[i] * prev[sp][i] + tau * sys.rhs[i];
      }
    }
    sys.matrix = std::move(split.interior);
  }
  return out;
}

SystemState GummelOperator::step(const SystemState& state) const {
  SystemState next;
  next.phi = solve_potential(state);
  const auto sys = species_systems(next.phi);
  next.p1 = LuFactorization(sys[0].matrix).solve(sys[0].rhs);
  next.p2 = LuFactorization(sys[1].matrix).solve(sys[1].rhs);
  return next;
}

std::vector<double> GummelOperator::poisson_residual(const SystemState& state) const {
  const int n = dofmap_->n_interior;
  auto au = blocks_->A_phi.matvec(state.phi);
  std::vector<double> r(n);
  for (int i = 0; i < n; ++i)
    r[i] = blocks_->F_phi[i] - au[i] +
           blocks_->M[i] * (coeffs_->q[0] * state.p1[i] + coeffs_->q[1] * state.p2[i]);
  return r;
}

std::vector<double> GummelOperator::residual_vector(const SystemState& state) const {
  const auto sys = species_systems(state.phi);
  return residual_from_systems(*blocks_, *coeffs_, state, sys[0].matrix, sys[0].rhs, sys[1].matrix,
                               sys[1].rhs);
}

double GummelOperator::increment_norm(std::span<const double> a, std::span<const double> b) const {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += blocks_->M[i] * d * d;
  }
  return std::sqrt(sum);
}

double GummelOperator::field_norm(std::span<const double> a) const {
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) sum += blocks_->M[i] * a[i] * a[i];
  return std::sqrt(sum);
}

std::vector<double> residual_from_systems(const AssembledBlocks& blocks, const PnpCoefficients& coeffs,
                                          const SystemState& state, const SparseMatrix& a1,
                                          std::span<const double> rhs1, const SparseMatrix& a2,
                                          std::span<const double> rhs2) {
  const int n = state.size();
  std::vector<double> r(3 * static_cast<size_t>(n));
  const auto au = blocks.A_phi.matvec(state.phi);
  for (int i = 0; i < n; ++i)
    r[i] = blocks.F_phi[i] - au[i] +
           blocks.M[i] * (coeffs.q[0] * state.p1[i] + coeffs.q[1] * state.p2[i]);
  const auto a1p = a1.matvec(state.p1);
  const auto a2p = a2.matvec(state.p2);
  for (int i = 0; i < n; ++i) {
    r[static_cast<size_t>(n) + i] = rhs1[i] - a1p[i];
    r[2 * static_cast<size_t>(n) + i] = rhs2[i] - a2p[i];
  }
  return r;
}

SystemState gummel_step(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                        const PnpCoefficients& coeffs, const SystemState& state) {
  return GummelOperator(mesh, dofmap, blocks, coeffs).step(state);
}

bool stopping_test(const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks,
                   const PnpCoefficients& coeffs, const SystemState& state, const SystemState& prev_state,
                   const SolverSettings& settings, StoppingMode mode) {
  if (mode == StoppingMode::residual) {
    const auto r = full_residual(mesh, dofmap, blocks, coeffs, state);
    return rms_norm(r) <= settings.tol;
  }
  double sum = 0.0;
  for (size_t i = 0; i < state.phi.size(); ++i) {
    const double d = state.phi[i] - prev_state.phi[i];
    sum += blocks.M[i] * d * d;
  }
  return std::sqrt(sum) <= settings.tol;
}

StoppingMode default_stopping_mode(GummelVariant variant) {
  // one residual convention across the table-producing variants keeps the
  // iteration counts comparable; the under-relaxed variant keeps its
  // potential-increment test
  return variant == GummelVariant::relaxed ? StoppingMode::increment : StoppingMode::residual;
}

namespace {

struct LoopOutcome {
  SystemState state;
  IterationReport report;
  bool probe_stopped = false;
};

// Shared outer loop for plain / relaxed / accel1 / accel2. When
// alpha_probe_limit > 0 the loop stops right after recording that many α*
// values (the adaptive probe).
LoopOutcome run_variant_loop(const GummelOperator& op, const SolverSettings& settings,
                             GummelVariant variant, StoppingMode mode, SystemState state,
                             int alpha_probe_limit) {
  LoopOutcome out;
  IterationReport& rep = out.report;
  const int n = op.n_interior();

  std::vector<double> r_prev_phi;
  bool have_prev_residual = false;

  if (mode == StoppingMode::residual) {
    const double r0 = rms_norm(op.residual_vector(state));
    rep.residual_history.push_back(r0);
    if (r0 <= settings.tol) {
      rep.converged = true;
      out.state = std::move(state);
      return out;
    }
  }

  for (int it = 1; it <= settings.max_iter; ++it) {
    const SystemState old = state;
    rep.iterations = it;

    // systems assembled at the final potential of this sweep, when available,
    // let the residual be formed without another assembly pass
    std::optional<std::array<GummelOperator::SpeciesSystem, 2>> final_systems;

    try {
    auto phi_hat = op.solve_potential(old);
    switch (variant) {
      case GummelVariant::plain: {
        state.phi = std::move(phi_hat);
        auto sys = op.species_systems(state.phi);
        state.p1 = LuFactorization(sys[0].matrix).solve(sys[0].rhs);
        state.p2 = LuFactorization(sys[1].matrix).solve(sys[1].rhs);
        final_systems = std::move(sys);
        break;
      }
      case GummelVariant::relaxed: {
        const double a = settings.relax_alpha;
        state.phi = blend(phi_hat, old.phi, a);
        auto sys = op.species_systems(state.phi);
        const auto p1_hat = LuFactorization(sys[0].matrix).solve(sys[0].rhs);
        const auto p2_hat = LuFactorization(sys[1].matrix).solve(sys[1].rhs);
        state.p1 = blend(p1_hat, old.p1, a);
        state.p2 = blend(p2_hat, old.p2, a);
        final_systems = std::move(sys);
        break;
      }
      case GummelVariant::accel1:
      case GummelVariant::accel2: {
        auto sys = op.species_systems(phi_hat);
        SystemState hat;
        hat.phi = phi_hat;
        hat.p1 = LuFactorization(sys[0].matrix).solve(sys[0].rhs);
        hat.p2 = LuFactorization(sys[1].matrix).solve(sys[1].rhs);
        if (it >= 2 && have_prev_residual) {
          const auto r_hat = op.poisson_residual(hat);
          // a minimizer pinned at zero would freeze the iterate for good;
          // keep an infinitesimal drift instead (stalls still show up as
          // max_iter, matching the divergence entries of the tables)
          const double alpha = settings.force_alpha
                                   ? *settings.force_alpha
                                   : std::max(alpha_star(r_hat, r_prev_phi), 1e-8);
          rep.alpha_history.push_back(alpha);
          state.phi = blend(hat.phi, old.phi, alpha);
          if (variant == GummelVariant::accel1) {
            state.p1 = blend(hat.p1, old.p1, alpha);
            state.p2 = blend(hat.p2, old.p2, alpha);
          } else {
            auto sys2 = op.species_systems(state.phi);
            state.p1 = LuFactorization(sys2[0].matrix).solve(sys2[0].rhs);
            state.p2 = LuFactorization(sys2[1].matrix).solve(sys2[1].rhs);
            final_systems = std::move(sys2);
          }
        } else {
          state = std::move(hat);
          final_systems = std::move(sys);
        }
        break;
      }
      default:
        throw std::logic_error("run_variant_loop: unexpected variant");
    }
    } catch (const SingularMatrixError& e) {
      rep.failure_reason = std::string("divergence: singular linear system (") + e.what() + ")";
      out.state = std::move(state);
      return out;
    }

    if (!state_finite(state)) {
      rep.failure_reason = "divergence: non-finite iterate";
      out.state = std::move(state);
      return out;
    }

    if (variant == GummelVariant::accel1 || variant == GummelVariant::accel2) {
      r_prev_phi = op.poisson_residual(state);
      have_prev_residual = true;
    }

    if (mode == StoppingMode::residual) {
      std::vector<double> r;
      if (final_systems)
        r = residual_from_systems(op.blocks(), op.coeffs(), state, (*final_systems)[0].matrix,
                                  (*final_systems)[0].rhs, (*final_systems)[1].matrix,
                                  (*final_systems)[1].rhs);
      else
        r = op.residual_vector(state);
      const double rn = rms_norm(r);
      rep.residual_history.push_back(rn);
      if (!std::isfinite(rn) || rn > settings.divergence_cap) {
        rep.failure_reason = "divergence: residual norm " + std::to_string(rn);
        out.state = std::move(state);
        return out;
      }
      if (rn <= settings.tol) {
        rep.converged = true;
        out.state = std::move(state);
        return out;
      }
    } else {
      const double inc = op.increment_norm(state.phi, old.phi);
      rep.residual_history.push_back(inc);
      if (!std::isfinite(inc) || inc > settings.divergence_cap) {
        rep.failure_reason = "divergence: potential increment " + std::to_string(inc);
        out.state = std::move(state);
        return out;
      }
      // a zero start can leave the first potential at roundoff scale (the
      // concentrations have not coupled in yet); do not let that fire the test
      const bool meaningful = it > 1 || op.field_norm(state.phi) > settings.tol;
      if (meaningful && inc <= settings.tol) {
        rep.converged = true;
        out.state = std::move(state);
        return out;
      }
    }

    if (alpha_probe_limit > 0 && static_cast<int>(rep.alpha_history.size()) >= alpha_probe_limit) {
      out.probe_stopped = true;
      out.state = std::move(state);
      return out;
    }
  }

  rep.failure_reason = "max_iter reached";
  out.state = std::move(state);
  (void)n;
  return out;
}

// Probe: two plain sweeps from the initial state, then the α* the third
// sweep would use, with no floor. A healthy α* delegates to the accelerated
// solver; a collapsed one selects the banded-relaxation loop. Returns the
// α* through `probed`, or convergence through the outcome.
std::optional<LoopOutcome> probe_alpha(const GummelOperator& op, const SolverSettings& settings,
                                       const SystemState& initial, double& probed) {
  SystemState state = initial;
  std::vector<double> r_prev;
  for (int sweep = 1; sweep <= 3; ++sweep) {
    auto phi_hat = op.solve_potential(state);
    auto sys = op.species_systems(phi_hat);
    SystemState hat;
    hat.phi = std::move(phi_hat);
    hat.p1 = LuFactorization(sys[0].matrix).solve(sys[0].rhs);
    hat.p2 = LuFactorization(sys[1].matrix).solve(sys[1].rhs);
    if (sweep == 3) {
      probed = alpha_star(op.poisson_residual(hat), r_prev);
      return std::nullopt;
    }
    state = std::move(hat);
    if (!state_finite(state)) {
      probed = 0.0;
      return std::nullopt;
    }
    const auto r = residual_from_systems(op.blocks(), op.coeffs(), state, sys[0].matrix,
                                         sys[0].rhs, sys[1].matrix, sys[1].rhs);
    const double rn = rms_norm(r);
    if (rn <= settings.tol) {
      LoopOutcome done;
      done.report.converged = true;
      done.report.iterations = sweep;
      done.report.residual_history.push_back(rn);
      done.state = std::move(state);
      return done;
    }
    r_prev = op.poisson_residual(state);
  }
  return std::nullopt;
}

// Algorithm: probe first; delegate to the accelerated solver when the
// observed α* is healthy, otherwise run the banded-relaxation loop.
LoopOutcome run_adaptive(const GummelOperator& op, const SolverSettings& settings, SystemState initial) {
  double probed = 0.0;
  try {
    if (auto done = probe_alpha(op, settings, initial, probed)) return std::move(*done);
  } catch (const SingularMatrixError&) {
    probed = 0.0;  // the plain sweeps blew up; the damped loop may still work
  }
  if (probed >= settings.theta_alpha)
    return run_variant_loop(op, settings, GummelVariant::accel2, StoppingMode::residual,
                            initial, 0);
  // probe α* too small: banded loop from scratch

  // banded adaptive loop, stopping on the full residual norm
  LoopOutcome out;
  IterationReport& rep = out.report;
  SystemState state = std::move(initial);

  std::vector<double> r_full = op.residual_vector(state);
  double prev_full_norm = rms_norm(r_full);
  std::vector<double> r_prev_phi(r_full.begin(), r_full.begin() + op.n_interior());
  rep.residual_history.push_back(prev_full_norm);
  if (prev_full_norm <= settings.tol) {
    rep.converged = true;
    out.state = std::move(state);
    return out;
  }

  for (int it = 1; it <= settings.max_iter; ++it) {
    const SystemState old = state;
    std::array<GummelOperator::SpeciesSystem, 2> final_systems;

    try {
    auto phi_hat = op.solve_potential(old);
    if (it == 1) {
      state.phi = std::move(phi_hat);
      final_systems = op.species_systems(state.phi);
    } else if (it == 2) {
      rep.alpha_history.push_back(settings.adaptive_alpha);
      state.phi = blend(phi_hat, old.phi, settings.adaptive_alpha);
      final_systems = op.species_systems(state.phi);
    } else {
      auto sys_hat = op.species_systems(phi_hat);
      SystemState hat;
      hat.phi = phi_hat;
      hat.p1 = LuFactorization(sys_hat[0].matrix).solve(sys_hat[0].rhs);
      hat.p2 = LuFactorization(sys_hat[1].matrix).solve(sys_hat[1].rhs);

      const double denom = std::max(op.field_norm(old.phi), 1e-300);
      const double uc_raw = op.increment_norm(hat.phi, old.phi) / denom;
      const AdaptiveBand& band = select_band(settings.bands, prev_full_norm);

      if (uc_raw >= band.theta1 && uc_raw <= band.theta2) {
        // raw step already inside the window
        rep.alpha_history.push_back(1.0);
        state.phi = std::move(hat.phi);
        state.p1 = std::move(hat.p1);
        state.p2 = std::move(hat.p2);
        final_systems = std::move(sys_hat);
        rep.iterations = it;
        goto record;
      }

      {
        const auto r_hat = op.poisson_residual(hat);
        double alpha = settings.force_alpha ? *settings.force_alpha : alpha_star(r_hat, r_prev_phi);
        for (int search = 0; search < 60; ++search) {
          const double uc_hat = alpha * uc_raw;
          if (uc_hat < 1e-10) {
            alpha = 0.5;
            continue;
          }
          if (uc_hat < band.theta1) {
            alpha *= 2.0;
            continue;
          }
          if (uc_hat <= band.theta2) break;
          alpha /= 2.0;
        }
        rep.alpha_history.push_back(alpha);
        state.phi = blend(hat.phi, old.phi, alpha);
        final_systems = op.species_systems(state.phi);
      }
    }

    state.p1 = LuFactorization(final_systems[0].matrix).solve(final_systems[0].rhs);
    state.p2 = LuFactorization(final_systems[1].matrix).solve(final_systems[1].rhs);
    rep.iterations = it;
    } catch (const SingularMatrixError& e) {
      rep.failure_reason = std::string("divergence: singular linear system (") + e.what() + ")";
      break;
    }

  record:
    if (!state_finite(state)) {
      rep.failure_reason = "divergence: non-finite iterate";
      break;
    }
    r_full = residual_from_systems(op.blocks(), op.coeffs(), state, final_systems[0].matrix,
                                   final_systems[0].rhs, final_systems[1].matrix,
                                   final_systems[1].rhs);
    const double rn = rms_norm(r_full);
    rep.residual_history.push_back(rn);
    if (!std::isfinite(rn) || rn > settings.divergence_cap) {
      rep.failure_reason = "divergence: residual norm " + std::to_string(rn);
      break;
    }
    if (rn <= settings.tol) {
      rep.converged = true;
      break;
    }
    prev_full_norm = rn;
    r_prev_phi.assign(r_full.begin(), r_full.begin() + op.n_interior());
  }

  if (!rep.converged && rep.failure_reason.empty()) rep.failure_reason = "max_iter reached";
  out.state = std::move(state);
  return out;
}

}  // namespace

std::pair<SystemState, IterationReport> gummel_solve(
    const Mesh& mesh, const DofMap& dofmap, const AssembledBlocks& blocks, const PnpCoefficients& coeffs,
    const SolverSettings& settings, GummelVariant variant, std::optional<SystemState> initial,
    std::optional<StoppingMode> mode) {
  validate_settings(settings);
  const auto t0 = std::chrono::steady_clock::now();

  GummelOperator op(mesh, dofmap, blocks, coeffs);
  SystemState start = initial ? std::move(*initial) : SystemState::zeros(dofmap.n_interior);
  if (start.size() != dofmap.n_interior)
    throw std::invalid_argument("gummel_solve: initial state size mismatch");

  LoopOutcome out;
  if (variant == GummelVariant::adaptive) {
    if (settings.bands.empty()) throw std::invalid_argument("gummel_solve: adaptive variant needs bands");
    out = run_adaptive(op, settings, std::move(start));
  } else {
    const StoppingMode m = mode ? *mode : default_stopping_mode(variant);
    out = run_variant_loop(op, settings, variant, m, std::move(start), 0);
  }

  out.report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(out.state), std::move(out.report)};
}

}  // namespace pnp
