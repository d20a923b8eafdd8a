#include "pnp/fas.hpp"

#include <chrono>
#include <cmath>

namespace pnp {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

std::vector<double> sample_boundary(const Mesh& mesh, const ScalarField& g) {
  std::vector<double> out(mesh.vertices.size(), 0.0);
  for (int v = 0; v < mesh.n_vertices(); ++v)
    if (mesh.boundary_flag[v]) out[v] = g(mesh.vertices[v]);
  return out;
}

}  // namespace

FasContext make_fas_context(TransferLevel level, const SolverSettings& settings, FasMode mode, int nu1,
                            int nu2) {
  FasContext ctx;
  ctx.path = level.kind == TransferKind::geometric ? CoarseEafePath::rediscretize
                                                   : CoarseEafePath::galerkin;
  ctx.level = std::move(level);
  ctx.coarse_settings = settings;
  ctx.mode = mode;
  ctx.nu1 = nu1;
  ctx.nu2 = nu2;
  if (mode == FasMode::tg) {
    ctx.nu1 = 0;
    ctx.nu2 = 1;
  }
  if (ctx.nu1 < 0 || ctx.nu2 < 0)
    throw std::invalid_argument("make_fas_context: smoothing counts must be >= 0");
  return ctx;
}

CoarseSystem::CoarseSystem(const FasContext& ctx, const Mesh& fine_mesh, const DofMap& fine_dofs,
                           const AssembledBlocks& fine_blocks, const PnpCoefficients& coeffs)
    : ctx_(&ctx),
      fine_mesh_(&fine_mesh),
      fine_dofs_(&fine_dofs),
      fine_blocks_(&fine_blocks),
      coeffs_(&coeffs),
      poisson_lu_(ctx.level.A_phi_coarse),
      n_coarse_(ctx.level.n_coarse()) {
  if (coeffs.tau != 0.0) throw std::invalid_argument("CoarseSystem: only the steady system is supported");
  if (ctx.path == CoarseEafePath::rediscretize) {
    if (!ctx.level.coarse_mesh || !ctx.level.coarse_dofmap)
      throw std::invalid_argument("CoarseSystem: rediscretize path needs the coarse mesh");
    coarse_geom_ = compute_geometry(*ctx.level.coarse_mesh);
    coarse_eafe_ = EafeAssembler(*ctx.level.coarse_mesh);
    coarse_g_u_full_ = sample_boundary(*ctx.level.coarse_mesh, coeffs.g_u);
  }
}

std::array<SparseMatrix, 2> CoarseSystem::species_matrices(std::span<const double> phi_coarse) const {
  std::array<SparseMatrix, 2> out;
  if (ctx_->path == CoarseEafePath::rediscretize) {
    const Mesh& cm = *ctx_->level.coarse_mesh;
    const DofMap& cd = *ctx_->level.coarse_dofmap;
    auto w = phi_full_from_interior(cm, cd, phi_coarse, coarse_g_u_full_);
    for (double& v : w) v *= coeffs_->c_lambda;
    for (int sp = 0; sp < 2; ++sp) {
      auto full = coarse_eafe_.assemble(cm, coarse_geom_, w, coeffs_->q[sp]);
      auto split = eliminate_dirichlet(full, cd, coarse_g_u_full_);  // lift discarded
      out[sp] = std::move(split.interior);
    }
  } else {
    const auto phi_fine = ctx_->level.P.matvec(phi_coarse);
    auto w = phi_full_from_interior(*fine_mesh_, *fine_dofs_, phi_fine, fine_blocks_->g_u_full);
    for (double& v : w) v *= coeffs_->c_lambda;
    for (int sp = 0; sp < 2; ++sp) {
      auto full = fine_blocks_->eafe.assemble(*fine_mesh_, fine_blocks_->geom, w, coeffs_->q[sp]);
      auto split = eliminate_dirichlet(full, *fine_dofs_, fine_blocks_->g_u_full);  // lift discarded
      out[sp] = triple_product(ctx_->level.R, split.interior, ctx_->level.P);
    }
  }
  return out;
}

std::vector<double> CoarseSystem::mbar_action(const SystemState& u) const {
  const auto m1 = ctx_->level.M_coarse.matvec(u.p1);
  const auto m2 = ctx_->level.M_coarse.matvec(u.p2);
  std::vector<double> out(n_coarse_);
  for (int i = 0; i < n_coarse_; ++i) out[i] = -coeffs_->q[0] * m1[i] - coeffs_->q[1] * m2[i];
  return out;
}

std::vector<double> CoarseSystem::apply(const SystemState& u) const {
  std::vector<double> r(3 * static_cast<size_t>(n_coarse_));
  const auto au = ctx_->level.A_phi_coarse.matvec(u.phi);
  const auto mbar = mbar_action(u);
  for (int i = 0; i < n_coarse_; ++i) r[i] = au[i] + mbar[i];
  const auto mats = species_matrices(u.phi);
  const auto a1p = mats[0].matvec(u.p1);
  const auto a2p = mats[1].matvec(u.p2);
  for (int i = 0; i < n_coarse_; ++i) {
    r[static_cast<size_t>(n_coarse_) + i] = a1p[i];
    r[2 * static_cast<size_t>(n_coarse_) + i] = a2p[i];
  }
  return r;
}

std::vector<double> CoarseSystem::solve_coarse_potential(std::span<const double> rhs) const {
  return poisson_lu_.solve(rhs);
}

CoarseRhs coarse_rhs(const CoarseSystem& cs, const SystemState& fine_state,
                     std::span<const double> fine_residual) {
  const TransferLevel& lvl = cs.context().level;
  const int nf = lvl.n_fine();
  const int nc = lvl.n_coarse();
  if (static_cast<int>(fine_residual.size()) != 3 * nf)
    throw std::invalid_argument("coarse_rhs: fine residual size mismatch");

  CoarseRhs out;
  out.y2.phi = lvl.R_u.matvec(fine_state.phi);
  out.y2.p1 = lvl.R_u.matvec(fine_state.p1);
  out.y2.p2 = lvl.R_u.matvec(fine_state.p2);

  out.tau2 = cs.apply(out.y2);
  for (int block = 0; block < 3; ++block) {
    const auto restricted =
        lvl.R.matvec(fine_residual.subspan(static_cast<size_t>(block) * nf, nf));
    double* dst = out.tau2.data() + static_cast<size_t>(block) * nc;
    for (int i = 0; i < nc; ++i) dst[i] += restricted[i];
  }
  return out;
}

CoarseSolveResult coarse_gummel(const CoarseSystem& cs, std::span<const double> tau2,
                                const SystemState& initial) {
  const int nc = cs.n_coarse();
  if (static_cast<int>(tau2.size()) != 3 * nc)
    throw std::invalid_argument("coarse_gummel: rhs size mismatch");
  const SolverSettings& settings = cs.context().coarse_settings;

  CoarseSolveResult out;
  out.state = initial;
  const std::span<const double> tau_phi = tau2.subspan(0, nc);
  const std::span<const double> tau_p1 = tau2.subspan(nc, nc);
  const std::span<const double> tau_p2 = tau2.subspan(2 * static_cast<size_t>(nc), nc);

  for (int l = 1; l <= settings.max_iter; ++l) {
    const auto mbar = cs.mbar_action(out.state);
    std::vector<double> rhs(nc);
    for (int i = 0; i < nc; ++i) rhs[i] = tau_phi[i] - mbar[i];
    out.state.phi = cs.solve_coarse_potential(rhs);

    const auto mats = cs.species_matrices(out.state.phi);
    try {
      out.state.p1 = LuFactorization(mats[0]).solve(tau_p1);
      out.state.p2 = LuFactorization(mats[1]).solve(tau_p2);
    } catch (const SingularMatrixError& e) {
      out.iterations = l;
      out.failure_reason = std::string("coarse concentration solve failed: ") + e.what();
      return out;
    }
    out.iterations = l;

    if (!all_finite(out.state.phi) || !all_finite(out.state.p1) || !all_finite(out.state.p2)) {
      out.failure_reason = "coarse divergence: non-finite iterate";
      return out;
    }

    // residual of (3.12) with the freshly assembled concentration blocks
    const auto au = cs.context().level.A_phi_coarse.matvec(out.state.phi);
    const auto mbar_new = cs.mbar_action(out.state);
    const auto a1p = mats[0].matvec(out.state.p1);
    const auto a2p = mats[1].matvec(out.state.p2);
    double sum = 0.0;
    for (int i = 0; i < nc; ++i) {
      const double r0 = tau_phi[i] - au[i] - mbar_new[i];
      const double r1 = tau_p1[i] - a1p[i];
      const double r2 = tau_p2[i] - a2p[i];
      sum += r0 * r0 + r1 * r1 + r2 * r2;
    }
    const double rn = std::sqrt(sum / (3.0 * nc));
    if (!std::isfinite(rn) || rn > settings.divergence_cap) {
      out.failure_reason = "coarse divergence: residual norm " + std::to_string(rn);
      return out;
    }
    if (rn <= settings.tol_coarse) return out;
  }
  return out;  // max_iter exhausted: accept the last iterate
}

std::pair<SystemState, IterationReport> fas_solve(const FasContext& ctx, const Mesh& mesh,
                                                  const DofMap& dofmap, const AssembledBlocks& blocks,
                                                  const PnpCoefficients& coeffs,
                                                  const SolverSettings& settings,
                                                  std::optional<SystemState> initial) {
  const auto t0 = std::chrono::steady_clock::now();
  if (ctx.level.n_fine() != dofmap.n_interior)
    throw std::invalid_argument("fas_solve: transfer level does not match the fine mesh");
  const bool tg = ctx.mode == FasMode::tg;
  const int nu1 = tg ? 0 : ctx.nu1;
  const int nu2 = tg ? 1 : ctx.nu2;
  if (tg && initial)
    throw std::invalid_argument("fas_solve: tg mode requires the zero initial state");

  GummelOperator op(mesh, dofmap, blocks, coeffs);
  CoarseSystem cs(ctx, mesh, dofmap, blocks, coeffs);

  SystemState state = initial ? std::move(*initial) : SystemState::zeros(dofmap.n_interior);
  if (state.size() != dofmap.n_interior)
    throw std::invalid_argument("fas_solve: initial state size mismatch");
  IterationReport rep;

  const auto finish = [&](SystemState s) {
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::make_pair(std::move(s), std::move(rep));
  };

  {
    const double r0 = rms_norm(op.residual_vector(state));
    rep.residual_history.push_back(r0);
    if (!tg && r0 <= settings.tol) {
      rep.converged = true;
      return finish(std::move(state));
    }
  }

  const int max_cycles = tg ? 1 : settings.max_iter;
  for (int cycle = 1; cycle <= max_cycles; ++cycle) {
    try {
    for (int s = 0; s < nu1; ++s) state = op.step(state);

    const auto r1 = op.residual_vector(state);
    const CoarseRhs cr = coarse_rhs(cs, state, r1);
    const CoarseSolveResult coarse = coarse_gummel(cs, cr.tau2, cr.y2);
    rep.coarse_iterations.push_back(coarse.iterations);
    rep.iterations = cycle;
    if (!coarse.failure_reason.empty()) {
      rep.failure_reason = coarse.failure_reason;
      return finish(std::move(state));
    }

    const int nc = cs.n_coarse();
    std::vector<double> diff(nc);
    const auto correct = [&](std::vector<double>& fine_field, const std::vector<double>& u2,
                             const std::vector<double>& y2) {
      for (int i = 0; i < nc; ++i) diff[i] = u2[i] - y2[i];
      const auto delta = ctx.level.P.matvec(diff);
      for (size_t i = 0; i < fine_field.size(); ++i) fine_field[i] += delta[i];
    };
    correct(state.phi, coarse.state.phi, cr.y2.phi);
    correct(state.p1, coarse.state.p1, cr.y2.p1);
    correct(state.p2, coarse.state.p2, cr.y2.p2);

    for (int s = 0; s < nu2; ++s) state = op.step(state);

    const double rn = rms_norm(op.residual_vector(state));
    rep.residual_history.push_back(rn);
    if (!std::isfinite(rn) || rn > settings.divergence_cap) {
      rep.failure_reason = "divergence: residual norm " + std::to_string(rn);
      return finish(std::move(state));
    }
    if (rn <= settings.tol) {
      rep.converged = true;
      return finish(std::move(state));
    }
    } catch (const SingularMatrixError& e) {
      rep.failure_reason = std::string("divergence: singular linear system (") + e.what() + ")";
      rep.iterations = cycle;
      return finish(std::move(state));
    }
  }

  if (tg)
    rep.converged = true;  // the two-grid method is a one-shot approximation
  else
    rep.failure_reason = "max_iter reached";
  return finish(std::move(state));
}

}  // namespace pnp
