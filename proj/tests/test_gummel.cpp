#include <doctest.h>

#include <cmath>

#include "pnp/gummel.hpp"
#include "pnp/harness.hpp"
#include "test_util.hpp"

using namespace pnp;
using test::Rng;

namespace {

struct Problem {
  Mesh mesh;
  DofMap dofmap;
  PnpCoefficients coeffs;
  ExactSolution exact;
  AssembledBlocks blocks;
};

Problem make_problem(int n, double l_sq) {
  Problem p;
  p.mesh = build_uniform(n);
  p.dofmap = DofMap::build(p.mesh);
  auto [coeffs, exact] = example31_problem(l_sq);
  p.coeffs = std::move(coeffs);
  p.exact = std::move(exact);
  p.blocks = assemble_blocks(p.mesh, p.dofmap, p.coeffs);
  return p;
}

bool states_bit_equal(const SystemState& a, const SystemState& b) {
  return a.phi == b.phi && a.p1 == b.p1 && a.p2 == b.p2;
}

}  // namespace

TEST_CASE("alpha_star hand-checked values") {
  // r_hat = 0: a = ||r||^2, b = -2||r||^2, minimizer 1
  const std::vector<double> zero = {0.0, 0.0};
  const std::vector<double> r = {1.0, 2.0};
  CHECK(alpha_star(zero, r) == 1.0);

  // orthogonal unit residuals: a = 2, b = -2, minimizer 1/2
  const std::vector<double> e1 = {1.0, 0.0};
  const std::vector<double> e2 = {0.0, 1.0};
  CHECK(alpha_star(e1, e2) == doctest::Approx(0.5).epsilon(1e-14));

  // degenerate r_hat == r
  CHECK(alpha_star(r, r) == 1.0);
}

TEST_CASE("alpha_star beats a 10^4-point grid scan on random residual pairs") {
  Rng rng(2718);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20;
    std::vector<double> rh(n), rp(n);
    for (double& v : rh) v = rng.uniform(-2, 2);
    for (double& v : rp) v = rng.uniform(-2, 2);
    const double a = alpha_star(rh, rp);
    const auto value = [&](double al) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        const double x = al * rh[i] + (1.0 - al) * rp[i];
        s += x * x;
      }
      return s;
    };
    double grid_min = std::numeric_limits<double>::infinity();
    for (int g = 0; g <= 10000; ++g) grid_min = std::min(grid_min, value(g / 10000.0));
    CHECK(value(a) <= grid_min + 1e-12 * std::max(1.0, grid_min));

    // blended residual never exceeds either endpoint
    const double blended = std::sqrt(value(a));
    const double rn_hat = euclidean_norm(rh);
    const double rn_prev = euclidean_norm(rp);
    CHECK(blended <= std::min(rn_hat, rn_prev) + 1e-12);
  }
}

TEST_CASE("gummel_step with zero concentrations on an f-only problem is a pure Poisson solve") {
  const Mesh mesh = build_uniform(3);
  const DofMap dofmap = DofMap::build(mesh);
  PnpCoefficients coeffs;
  coeffs.c_lambda = 1.0;
  coeffs.f = [](const Vec3& x) { return std::sin(x.x) + x.y; };
  coeffs.F1 = coeffs.F2 = [](const Vec3&) { return 0.0; };
  coeffs.g_u = coeffs.g_p = coeffs.g_n = [](const Vec3&) { return 0.0; };
  const auto blocks = assemble_blocks(mesh, dofmap, coeffs);

  const auto next = gummel_step(mesh, dofmap, blocks, coeffs, SystemState::zeros(dofmap.n_interior));
  const auto direct = lu_solve(blocks.A_phi, blocks.F_phi);
  for (int i = 0; i < dofmap.n_interior; ++i)
    CHECK(next.phi[i] == doctest::Approx(direct[i]).epsilon(1e-13));
  for (int i = 0; i < dofmap.n_interior; ++i) {
    CHECK(next.p1[i] == doctest::Approx(0.0));
    CHECK(next.p2[i] == doctest::Approx(0.0));
  }
}

TEST_CASE("plain gummel converges and a converged state is a fixed point") {
  Problem p = make_problem(3, 1.0);
  SolverSettings settings;
  settings.tol = 1e-10;
  const auto [state, report] = gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings,
                                            GummelVariant::plain);
  REQUIRE(report.converged);
  CHECK(report.iterations >= 1);
  CHECK(static_cast<int>(report.residual_history.size()) == report.iterations + 1);

  // the residual definition: a state solving both blocks has a tiny residual
  const auto r = full_residual(p.mesh, p.dofmap, p.blocks, p.coeffs, state);
  std::vector<double> load = p.blocks.F_phi;
  load.insert(load.end(), p.blocks.G1.begin(), p.blocks.G1.end());
  load.insert(load.end(), p.blocks.G2.begin(), p.blocks.G2.end());
  CHECK(euclidean_norm(r) <= 1e-10 * std::max(1.0, euclidean_norm(load)));

  const auto next = gummel_step(p.mesh, p.dofmap, p.blocks, p.coeffs, state);
  double diff = 0.0;
  for (int i = 0; i < p.dofmap.n_interior; ++i)
    diff = std::max({diff, std::abs(next.phi[i] - state.phi[i]),
                     std::abs(next.p1[i] - state.p1[i]), std::abs(next.p2[i] - state.p2[i])});
  CHECK(diff <= 1e-7);

  // restarting any variant from the converged state exits within one sweep
  for (const auto variant : {GummelVariant::plain, GummelVariant::relaxed, GummelVariant::accel1,
                             GummelVariant::accel2, GummelVariant::adaptive}) {
    SolverSettings quick;
    quick.tol = 1e-6;
    const auto [s2, rep2] =
        gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, quick, variant, state);
    CHECK(rep2.converged);
    CHECK(rep2.iterations <= 1);
  }
}

TEST_CASE("stopping_test residual and increment modes") {
  Problem p = make_problem(3, 1.0);
  SolverSettings settings;
  settings.tol = 1e-8;
  const auto [state, report] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::plain);
  REQUIRE(report.converged);

  SolverSettings s;
  s.tol = 1e-6;
  CHECK(stopping_test(p.mesh, p.dofmap, p.blocks, p.coeffs, state, state, s, StoppingMode::residual));
  CHECK(stopping_test(p.mesh, p.dofmap, p.blocks, p.coeffs, state, state, s, StoppingMode::increment));

  SystemState far = SystemState::zeros(p.dofmap.n_interior);
  CHECK_FALSE(
      stopping_test(p.mesh, p.dofmap, p.blocks, p.coeffs, far, state, s, StoppingMode::residual));
  CHECK_FALSE(
      stopping_test(p.mesh, p.dofmap, p.blocks, p.coeffs, far, state, s, StoppingMode::increment));
}

TEST_CASE("forced alpha = 1 makes the accelerated variants bit-identical to plain") {
  Problem p = make_problem(3, 1.5);
  SolverSettings plain_settings;
  plain_settings.tol = 1e-8;
  const auto [plain_state, plain_rep] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, plain_settings, GummelVariant::plain,
                   std::nullopt, StoppingMode::increment);
  REQUIRE(plain_rep.converged);

  SolverSettings forced = plain_settings;
  forced.force_alpha = 1.0;
  for (const auto variant : {GummelVariant::accel1, GummelVariant::accel2}) {
    const auto [state, rep] = gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, forced, variant,
                                           std::nullopt, StoppingMode::increment);
    REQUIRE(rep.converged);
    CHECK(rep.iterations == plain_rep.iterations);
    CHECK(states_bit_equal(state, plain_state));
  }

  // the adaptive variant always stops on the full residual; compare against
  // plain gummel under the same convention
  const auto [plain_res_state, plain_res_rep] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, plain_settings, GummelVariant::plain,
                   std::nullopt, StoppingMode::residual);
  const auto [astate, arep] = gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, forced,
                                           GummelVariant::adaptive);
  REQUIRE(arep.converged);
  CHECK(arep.iterations == plain_res_rep.iterations);
  CHECK(states_bit_equal(astate, plain_res_state));
}

TEST_CASE("identical runs are bit-identical (determinism)") {
  Problem p = make_problem(3, 2.0);
  SolverSettings settings;
  const auto [s1, r1] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::accel2);
  const auto [s2, r2] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::accel2);
  CHECK(r1.iterations == r2.iterations);
  CHECK(r1.residual_history == r2.residual_history);
  CHECK(r1.alpha_history == r2.alpha_history);
  CHECK(states_bit_equal(s1, s2));
}

TEST_CASE("relaxed variant converges where settings allow and reports alpha history for accel") {
  Problem p = make_problem(3, 1.0);
  SolverSettings settings;
  const auto [state, report] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::relaxed);
  CHECK(report.converged);

  const auto [astate, areport] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::accel2);
  CHECK(areport.converged);
  if (areport.iterations >= 3) CHECK(!areport.alpha_history.empty());

  // both reach the same discrete solution
  for (int i = 0; i < p.dofmap.n_interior; ++i)
    CHECK(state.phi[i] == doctest::Approx(astate.phi[i]).epsilon(5e-4));
}

TEST_CASE("divergence is flagged with a reason") {
  Problem p = make_problem(4, 40.0);  // far beyond the convergent range
  SolverSettings settings;
  settings.max_iter = 60;
  const auto [state, report] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::plain);
  CHECK_FALSE(report.converged);
  CHECK(!report.failure_reason.empty());
}

TEST_CASE("settings validation rejects malformed bands and tolerances") {
  Problem p = make_problem(2, 1.0);
  SolverSettings bad;
  bad.tol = -1.0;
  CHECK_THROWS_AS(
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, bad, GummelVariant::plain),
      std::invalid_argument);

  SolverSettings bands;
  bands.bands = {{1e-3, 0.1, 0.5}, {1e-2, 0.01, 0.1}};  // floors must decrease
  CHECK_THROWS_AS(
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, bands, GummelVariant::adaptive),
      std::invalid_argument);

  SolverSettings theta;
  theta.bands = {{1e-3, 0.5, 0.1}};  // theta1 > theta2
  CHECK_THROWS_AS(
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, theta, GummelVariant::adaptive),
      std::invalid_argument);
}

TEST_CASE("backward-Euler step keeps a steady state stationary") {
  Problem p = make_problem(3, 1.0);
  SolverSettings settings;
  settings.tol = 1e-11;
  const auto [steady, report] =
      gummel_solve(p.mesh, p.dofmap, p.blocks, p.coeffs, settings, GummelVariant::plain);
  REQUIRE(report.converged);

  PnpCoefficients transient = p.coeffs;
  transient.tau = 0.5;
  GummelOperator op(p.mesh, p.dofmap, p.blocks, transient, steady);
  const auto next = op.step(steady);
  for (int i = 0; i < p.dofmap.n_interior; ++i) {
    CHECK(next.phi[i] == doctest::Approx(steady.phi[i]).epsilon(1e-7));
    CHECK(next.p1[i] == doctest::Approx(steady.p1[i]).epsilon(1e-7));
    CHECK(next.p2[i] == doctest::Approx(steady.p2[i]).epsilon(1e-7));
  }
}
