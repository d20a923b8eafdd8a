#include <CLI11.hpp>

#include <iostream>

#include "pnp/harness.hpp"

namespace {

int run_command(const std::vector<int>& n_values, const std::vector<double>& lsq_values,
                pnp::ExperimentConfig base, const std::string& out_path) {
  const auto rows = pnp::sweep(base, n_values, lsq_values);
  if (!out_path.empty()) {
    pnp::emit_csv(rows, out_path);
  } else {
    std::cout << pnp::csv_header() << '\n';
    for (const auto& row : rows) std::cout << pnp::csv_line(row) << '\n';
  }
  for (const auto& row : rows) {
    std::cerr << row.algorithm << " h=" << row.h_label << " Lsq=" << row.L_sq
              << (row.converged ? " converged in " + std::to_string(row.iterations) + " iterations"
                                : " did not converge")
              << '\n';
  }
  for (const auto& row : rows)
    if (!row.converged) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"EAFE discretization of the Poisson-Nernst-Planck system with Gummel and FAS solvers"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a 'key = value' file; flags override it");

  auto* run = app.add_subcommand("run", "Run one experiment or a sweep and emit CSV rows");
  std::string mesh_kind = "uniform";
  std::vector<int> n_values{8};
  int n_coarse = 0;
  double s = 0.3;
  std::vector<double> lsq_values{1.0};
  std::string alg = "gummel";
  std::string preset;
  std::string mesh_file;
  std::string out_path;
  double alpha = -1.0;
  pnp::ExperimentConfig config;

  run->add_option("--mesh", mesh_kind, "Mesh family: uniform|kershaw|perturbed|file")
      ->capture_default_str();
  run->add_option("--n", n_values, "Subdivisions per axis (repeatable for sweeps)")
      ->capture_default_str();
  run->add_option("--n-coarse", n_coarse, "Coarse subdivisions for gfas/tg (default n/2)");
  run->add_option("--s", s, "Distortion parameter for kershaw/perturbed meshes")
      ->capture_default_str();
  run->add_option("--Lsq", lsq_values, "Convection scale L^2, c_lambda = 0.179 L^2 (repeatable)")
      ->capture_default_str();
  run->add_option("--alg", alg, "gummel|relaxed|accel1|accel2|adaptive|gfas|afas|tg")
      ->capture_default_str();
  run->add_option("--nu1", config.nu1, "FAS pre-smoothing sweeps")->capture_default_str();
  run->add_option("--nu2", config.nu2, "FAS post-smoothing sweeps")->capture_default_str();
  run->add_option("--tol", config.settings.tol, "Outer tolerance")->capture_default_str();
  run->add_option("--tol-coarse", config.settings.tol_coarse, "Coarse-level tolerance")
      ->capture_default_str();
  run->add_option("--max-iter", config.settings.max_iter, "Iteration cap")->capture_default_str();
  run->add_option("--alpha", alpha, "Relaxation factor (relaxed variant / adaptive seed)");
  run->add_option("--theta-alpha", config.settings.theta_alpha,
                  "Adaptive probe threshold on the observed alpha*")
      ->capture_default_str();
  run->add_option("--preset", preset, "Adaptive band preset: adaptive-a|adaptive-b");
  run->add_option("--theta1", config.amg.theta1, "AMG strength threshold")->capture_default_str();
  run->add_option("--theta2", config.amg.theta2, "AMG row-sum cutoff (1 disables)")
      ->capture_default_str();
  run->add_option("--passes", config.amg.passes, "AMG coarsening passes")->capture_default_str();
  run->add_option("--mesh-file", mesh_file, "Mesh path for --mesh file");
  run->add_option("--out", out_path, "Output CSV path (stdout when omitted)");

  auto* mesh_cmd = app.add_subcommand("mesh", "Generate a mesh and write it in the ASCII format");
  std::string gen_kind = "uniform";
  int gen_n = 8;
  double gen_s = 0.3;
  std::string gen_out = "mesh.txt";
  mesh_cmd->add_option("--kind", gen_kind, "uniform|kershaw|perturbed")->capture_default_str();
  mesh_cmd->add_option("--n", gen_n, "Subdivisions per axis")->capture_default_str();
  mesh_cmd->add_option("--s", gen_s, "Distortion parameter")->capture_default_str();
  mesh_cmd->add_option("--out", gen_out, "Output path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) {
      config.mesh_kind = pnp::mesh_kind_from_string(mesh_kind);
      config.algorithm = pnp::algorithm_from_string(alg);
      config.n_coarse = n_coarse;
      config.s = s;
      config.mesh_file = mesh_file;
      if (alpha >= 0.0) {
        config.settings.relax_alpha = alpha;
        config.settings.adaptive_alpha = alpha;
      }
      if (!preset.empty()) {
        if (preset == "adaptive-a")
          config.settings.bands = pnp::adaptive_bands_a();
        else if (preset == "adaptive-b")
          config.settings.bands = pnp::adaptive_bands_b();
        else
          throw std::invalid_argument("preset: unknown preset '" + preset + "'");
      }
      return run_command(n_values, lsq_values, config, out_path);
    }
    if (mesh_cmd->parsed()) {
      pnp::Mesh mesh;
      const pnp::MeshKind kind = pnp::mesh_kind_from_string(gen_kind);
      if (kind == pnp::MeshKind::uniform)
        mesh = pnp::build_uniform(gen_n);
      else if (kind == pnp::MeshKind::kershaw)
        mesh = pnp::build_kershaw(gen_n, gen_s);
      else if (kind == pnp::MeshKind::perturbed)
        mesh = pnp::build_perturbed(gen_n, gen_s);
      else
        throw std::invalid_argument("kind: cannot generate a 'file' mesh");
      pnp::export_mesh(mesh, gen_out);
      std::cerr << "wrote " << mesh.n_vertices() << " vertices, " << mesh.n_tets() << " tets to "
                << gen_out << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
