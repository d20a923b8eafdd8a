#ifndef PNP_HARNESS_HPP
#define PNP_HARNESS_HPP

#include <string>

#include "pnp/fas.hpp"

namespace pnp {

enum class Algorithm { gummel, relaxed, accel1, accel2, adaptive, gfas, afas, tg };

Algorithm algorithm_from_string(const std::string& name);
std::string algorithm_to_string(Algorithm a);
MeshKind mesh_kind_from_string(const std::string& name);
std::string mesh_kind_to_string(MeshKind k);

struct ExperimentConfig {
  MeshKind mesh_kind = MeshKind::uniform;
  int n = 8;
  int n_coarse = 0;  // 0: use n/2 for the two-level algorithms
  double s = 0.3;
  double L_sq = 1.0;
  Algorithm algorithm = Algorithm::gummel;
  SolverSettings settings;
  int nu1 = 1;
  int nu2 = 1;
  StrengthParams amg;
  std::string mesh_file;
};

struct ResultRow {
  std::string algorithm;
  double h_label = 0.0;
  double L_sq = 0.0;
  int iterations = 0;
  double coarse_iter_avg = 0.0;  // total coarse iterations / cycles, rounded
  ErrorNorms errors;
  bool has_errors = false;  // false when the solve did not converge
  bool converged = false;
  double wall_time_s = 0.0;
};

/// Steady-state test problem on the unit cube: q = (+1, -1), c_lambda =
/// 0.179 L^2, trigonometric exact solution, manufactured sources (f vanishes
/// identically by cancellation).
std::pair<PnpCoefficients, ExactSolution> example31_problem(double L_sq);

ResultRow run_experiment(const ExperimentConfig& config);

/// Cross product of the listed sizes and convection scales, n outer.
std::vector<ResultRow> sweep(const ExperimentConfig& base, std::span<const int> n_values,
                             std::span<const double> L_sq_values);

std::string csv_header();
std::string csv_line(const ResultRow& row);
void emit_csv(std::span<const ResultRow> rows, const std::string& path);

}  // namespace pnp

#endif
