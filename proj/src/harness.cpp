#include "pnp/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace pnp {

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "gummel") return Algorithm::gummel;
  if (name == "relaxed") return Algorithm::relaxed;
  if (name == "accel1") return Algorithm::accel1;
  if (name == "accel2") return Algorithm::accel2;
  if (name == "adaptive") return Algorithm::adaptive;
  if (name == "gfas") return Algorithm::gfas;
  if (name == "afas") return Algorithm::afas;
  if (name == "tg") return Algorithm::tg;
  throw std::invalid_argument("alg: unknown algorithm '" + name + "'");
}

std::string algorithm_to_string(Algorithm a) {
  switch (a) {
    case Algorithm::gummel: return "gummel";
    case Algorithm::relaxed: return "relaxed";
    case Algorithm::accel1: return "accel1";
    case Algorithm::accel2: return "accel2";
    case Algorithm::adaptive: return "adaptive";
    case Algorithm::gfas: return "gfas";
    case Algorithm::afas: return "afas";
    case Algorithm::tg: return "tg";
  }
  return "?";
}

MeshKind mesh_kind_from_string(const std::string& name) {
  if (name == "uniform") return MeshKind::uniform;
  if (name == "kershaw") return MeshKind::kershaw;
  if (name == "perturbed") return MeshKind::perturbed;
  if (name == "file") return MeshKind::file;
  throw std::invalid_argument("mesh: unknown mesh kind '" + name + "'");
}

std::string mesh_kind_to_string(MeshKind k) {
  switch (k) {
    case MeshKind::uniform: return "uniform";
    case MeshKind::kershaw: return "kershaw";
    case MeshKind::perturbed: return "perturbed";
    case MeshKind::file: return "file";
  }
  return "?";
}

std::pair<PnpCoefficients, ExactSolution> example31_problem(double L_sq) {
  if (!(L_sq > 0.0)) throw std::invalid_argument("Lsq: must be positive");
  using std::numbers::pi;
  const double c_lambda = 0.179 * L_sq;
  const double p2 = pi * pi;
  const double p4 = p2 * p2;

  const auto u = [](const Vec3& x) {
    return std::cos(pi * x.x) * std::cos(pi * x.y) * std::cos(pi * x.z);
  };
  const auto grad_u = [](const Vec3& x) {
    const double cx = std::cos(pi * x.x), cy = std::cos(pi * x.y), cz = std::cos(pi * x.z);
    const double sx = std::sin(pi * x.x), sy = std::sin(pi * x.y), sz = std::sin(pi * x.z);
    return Vec3{-pi * sx * cy * cz, -pi * cx * sy * cz, -pi * cx * cy * sz};
  };
  const auto grad_sq = [grad_u](const Vec3& x) {
    const Vec3 g = grad_u(x);
    return dot(g, g);
  };

  ExactSolution exact;
  exact.u = u;
  exact.p = [u, p2](const Vec3& x) { return 3.0 * p2 * (1.0 + 0.5 * u(x)); };
  exact.n = [u, p2](const Vec3& x) { return 3.0 * p2 * (1.0 - 0.5 * u(x)); };
  exact.grad_u = grad_u;
  exact.grad_p = [grad_u, p2](const Vec3& x) { return grad_u(x) * (1.5 * p2); };
  exact.grad_n = [grad_u, p2](const Vec3& x) { return grad_u(x) * (-1.5 * p2); };

  PnpCoefficients coeffs;
  coeffs.q = {+1.0, -1.0};
  coeffs.c_lambda = c_lambda;
  coeffs.tau = 0.0;
  // -Δu = 3π²u cancels against (p - n) = 3π²u
  coeffs.f = [](const Vec3&) { return 0.0; };
  // F^p = -Δp - c_λ (∇p·∇u + p Δu),  F^n = -Δn + c_λ (∇n·∇u + n Δu)
  coeffs.F1 = [u, grad_sq, c_lambda, p2, p4](const Vec3& x) {
    const double c = u(x);
    const double g = grad_sq(x);
    return 4.5 * p4 * c - c_lambda * (1.5 * p2 * g - 9.0 * p4 * c - 4.5 * p4 * c * c);
  };
  coeffs.F2 = [u, grad_sq, c_lambda, p2, p4](const Vec3& x) {
    const double c = u(x);
    const double g = grad_sq(x);
    return -4.5 * p4 * c + c_lambda * (-1.5 * p2 * g - 9.0 * p4 * c + 4.5 * p4 * c * c);
  };
  coeffs.g_u = exact.u;
  coeffs.g_p = exact.p;
  coeffs.g_n = exact.n;
  return {std::move(coeffs), std::move(exact)};
}

namespace {

Mesh build_config_mesh(const ExperimentConfig& config) {
  switch (config.mesh_kind) {
    case MeshKind::uniform: return build_uniform(config.n);
    case MeshKind::kershaw: return build_kershaw(config.n, config.s);
    case MeshKind::perturbed: return build_perturbed(config.n, config.s);
    case MeshKind::file:
      if (config.mesh_file.empty()) throw std::invalid_argument("mesh-file: path required");
      return import_mesh(config.mesh_file);
  }
  throw std::invalid_argument("mesh: invalid mesh kind");
}

GummelVariant to_variant(Algorithm a) {
  switch (a) {
    case Algorithm::gummel: return GummelVariant::plain;
    case Algorithm::relaxed: return GummelVariant::relaxed;
    case Algorithm::accel1: return GummelVariant::accel1;
    case Algorithm::accel2: return GummelVariant::accel2;
    case Algorithm::adaptive: return GummelVariant::adaptive;
    default: throw std::logic_error("to_variant: not a Gummel algorithm");
  }
}

}  // namespace

ResultRow run_experiment(const ExperimentConfig& config) {
  const bool two_level_geometric =
      config.algorithm == Algorithm::gfas || config.algorithm == Algorithm::tg;
  if (two_level_geometric) {
    if (config.mesh_kind == MeshKind::kershaw || config.mesh_kind == MeshKind::file)
      throw std::invalid_argument("alg: " + algorithm_to_string(config.algorithm) +
                                  " requires a nested uniform or perturbed mesh");
    if (config.algorithm == Algorithm::tg && config.mesh_kind != MeshKind::uniform)
      throw std::invalid_argument("alg: tg requires a uniform mesh");
  }

  auto [coeffs, exact] = example31_problem(config.L_sq);
  const Mesh mesh = build_config_mesh(config);
  const DofMap dofmap = DofMap::build(mesh);
  const AssembledBlocks blocks = assemble_blocks(mesh, dofmap, coeffs);

  SystemState state;
  IterationReport report;

  if (two_level_geometric) {
    int nc = config.n_coarse > 0 ? config.n_coarse : config.n / 2;
    if (nc < 1 || config.n % nc != 0 || nc >= config.n)
      throw std::invalid_argument("n-coarse: must divide n and be smaller than it");
    const Mesh coarse = config.mesh_kind == MeshKind::uniform ? build_uniform(nc)
                                                              : build_perturbed(nc, config.s);
    const ParentMap parents = locate_parents(coarse, mesh);
    TransferLevel level = build_geometric_level(coarse, mesh, dofmap, parents);
    const FasMode mode = config.algorithm == Algorithm::tg ? FasMode::tg : FasMode::fas;
    const FasContext ctx =
        make_fas_context(std::move(level), config.settings, mode, config.nu1, config.nu2);
    std::tie(state, report) = fas_solve(ctx, mesh, dofmap, blocks, coeffs, config.settings);
  } else if (config.algorithm == Algorithm::afas) {
    TransferLevel level = build_algebraic_level(blocks.A_phi, blocks.M, config.amg);
    const FasContext ctx =
        make_fas_context(std::move(level), config.settings, FasMode::fas, config.nu1, config.nu2);
    std::tie(state, report) = fas_solve(ctx, mesh, dofmap, blocks, coeffs, config.settings);
  } else {
    std::tie(state, report) =
        gummel_solve(mesh, dofmap, blocks, coeffs, config.settings, to_variant(config.algorithm));
  }

  ResultRow row;
  row.algorithm = algorithm_to_string(config.algorithm);
  row.h_label = mesh.h_label();
  row.L_sq = config.L_sq;
  row.converged = report.converged;
  row.iterations = report.converged ? report.iterations : config.settings.max_iter;
  if (!report.coarse_iterations.empty()) {
    double total = 0.0;
    for (int c : report.coarse_iterations) total += c;
    row.coarse_iter_avg = std::round(total / static_cast<double>(report.coarse_iterations.size()));
  }
  row.wall_time_s = report.wall_time_s;
  if (report.converged) {
    const auto u_full = phi_full_from_interior(mesh, dofmap, state.phi, blocks.g_u_full);
    const auto p_full = phi_full_from_interior(mesh, dofmap, state.p1, blocks.g_p_full);
    const auto n_full = phi_full_from_interior(mesh, dofmap, state.p2, blocks.g_n_full);
    row.errors = error_norms(mesh, u_full, p_full, n_full, exact);
    row.has_errors = true;
  }
  return row;
}

std::vector<ResultRow> sweep(const ExperimentConfig& base, std::span<const int> n_values,
                             std::span<const double> L_sq_values) {
  std::vector<ResultRow> rows;
  for (int n : n_values) {
    for (double lsq : L_sq_values) {
      ExperimentConfig c = base;
      c.n = n;
      c.L_sq = lsq;
      rows.push_back(run_experiment(c));
    }
  }
  return rows;
}

std::string csv_header() {
  return "algorithm,h,L_sq,iters,coarse_iters_avg,e_u_l2,e_p_l2,e_n_l2,e_u_h1,e_p_h1,e_n_h1,"
         "converged,runtime_s";
}

namespace {

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

std::string csv_line(const ResultRow& row) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const ErrorNorms& e = row.errors;
  std::string out = row.algorithm;
  out += ',' + fmt6(row.h_label);
  out += ',' + fmt6(row.L_sq);
  out += ',' + std::to_string(row.iterations);
  out += ',' + fmt6(row.coarse_iter_avg);
  for (double v : {e.u_l2, e.p_l2, e.n_l2, e.u_h1, e.p_h1, e.n_h1})
    out += ',' + fmt6(row.has_errors ? v : nan);
  out += ',';
  out += row.converged ? '1' : '0';
  out += ',' + fmt6(row.wall_time_s);
  return out;
}

void emit_csv(std::span<const ResultRow> rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_csv: cannot open " + path);
  out << csv_header() << '\n';
  for (const ResultRow& row : rows) out << csv_line(row) << '\n';
  if (!out) throw std::runtime_error("emit_csv: write failed for " + path);
}

}  // namespace pnp
