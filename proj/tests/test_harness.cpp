#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "pnp/harness.hpp"
#include "test_util.hpp"

using namespace pnp;
using test::Rng;

namespace {

// central-difference divergence of a vector field
double fd_divergence(const std::function<Vec3(const Vec3&)>& w, const Vec3& x, double h) {
  double div = 0.0;
  const Vec3 ex{h, 0, 0}, ey{0, h, 0}, ez{0, 0, h};
  div += (w(x + ex).x - w(x - ex).x) / (2.0 * h);
  div += (w(x + ey).y - w(x - ey).y) / (2.0 * h);
  div += (w(x + ez).z - w(x - ez).z) / (2.0 * h);
  return div;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

TEST_CASE("example31: f vanishes and the boundary trace is zero on the cube faces") {
  auto [coeffs, exact] = example31_problem(2.6);
  CHECK(coeffs.c_lambda == doctest::Approx(0.179 * 2.6));
  CHECK(coeffs.q[0] == 1.0);
  CHECK(coeffs.q[1] == -1.0);
  CHECK(coeffs.f(Vec3{0.1, 0.2, 0.3}) == 0.0);
  CHECK(coeffs.g_u(Vec3{0.5, 0.1, -0.3}) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(coeffs.g_u(Vec3{0.2, -0.5, 0.4}) == doctest::Approx(0.0).epsilon(1e-15));

  // p + n = 6 pi^2 everywhere; boundary trace equals the exact solution
  const Vec3 x{0.17, -0.31, 0.05};
  CHECK(exact.p(x) + exact.n(x) == doctest::Approx(6.0 * std::numbers::pi * std::numbers::pi));
}

TEST_CASE("example31 sources agree with the finite-difference divergence oracle") {
  for (double l_sq : {1.0, 2.7}) {
    auto [coeffs, exact] = example31_problem(l_sq);
    const double c = coeffs.c_lambda;
    const auto flux_p = [&](const Vec3& y) {
      return exact.grad_p(y) + exact.grad_u(y) * (c * exact.p(y));
    };
    const auto flux_n = [&](const Vec3& y) {
      return exact.grad_n(y) - exact.grad_u(y) * (c * exact.n(y));
    };
    Rng rng(1234);
    for (int trial = 0; trial < 100; ++trial) {
      const Vec3 x{rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45)};
      const double fp_fd = -fd_divergence(flux_p, x, 1e-5);
      const double fn_fd = -fd_divergence(flux_n, x, 1e-5);
      const double scale = std::max({std::abs(fp_fd), std::abs(fn_fd), 1.0});
      CHECK(std::abs(coeffs.F1(x) - fp_fd) <= 1e-6 * scale);
      CHECK(std::abs(coeffs.F2(x) - fn_fd) <= 1e-6 * scale);
    }
  }

  // spot value at the origin: -Δp = 4.5 pi^4, -c (p Δu) = +13.5 c pi^4
  auto [coeffs, exact] = example31_problem(1.0);
  const double pi4 = std::pow(std::numbers::pi, 4);
  CHECK(coeffs.F1(Vec3{0, 0, 0}) == doctest::Approx((4.5 + 13.5 * 0.179) * pi4).epsilon(1e-12));
}

TEST_CASE("example31 rejects nonpositive convection scales") {
  CHECK_THROWS_AS(example31_problem(0.0), std::invalid_argument);
  CHECK_THROWS_AS(example31_problem(-3.0), std::invalid_argument);
}

TEST_CASE("run_experiment produces a converged row with error norms") {
  ExperimentConfig config;
  config.n = 4;
  config.L_sq = 1.0;
  config.algorithm = Algorithm::gummel;
  const ResultRow row = run_experiment(config);
  CHECK(row.converged);
  CHECK(row.has_errors);
  CHECK(row.algorithm == "gummel");
  CHECK(row.h_label == doctest::Approx(0.25));
  CHECK(row.iterations >= 1);
  CHECK(row.errors.u_l2 > 0.0);
  CHECK(row.errors.u_l2 < 1.0);
}

TEST_CASE("run_experiment validates configuration keys") {
  ExperimentConfig tg_bad;
  tg_bad.algorithm = Algorithm::tg;
  tg_bad.mesh_kind = MeshKind::kershaw;
  tg_bad.n = 4;
  CHECK_THROWS_AS(run_experiment(tg_bad), std::invalid_argument);

  ExperimentConfig nc_bad;
  nc_bad.algorithm = Algorithm::gfas;
  nc_bad.n = 4;
  nc_bad.n_coarse = 3;  // does not divide
  CHECK_THROWS_AS(run_experiment(nc_bad), std::invalid_argument);

  ExperimentConfig file_bad;
  file_bad.mesh_kind = MeshKind::file;
  CHECK_THROWS_AS(run_experiment(file_bad), std::invalid_argument);
}

TEST_CASE("gfas on a perturbed mesh pair works (nested by construction)") {
  ExperimentConfig config;
  config.algorithm = Algorithm::gfas;
  config.mesh_kind = MeshKind::perturbed;
  config.n = 4;
  config.s = 0.3;
  config.L_sq = 1.0;
  const ResultRow row = run_experiment(config);
  CHECK(row.converged);
  CHECK(row.coarse_iter_avg >= 1.0);
}

TEST_CASE("csv emission: header only, one row, and shape") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "pnp_csv_test.csv").string();
  emit_csv({}, path);
  {
    std::ifstream in(path);
    std::string line;
    REQUIRE(std::getline(in, line));
    CHECK(line == csv_header());
    CHECK_FALSE(std::getline(in, line));
  }

  ExperimentConfig config;
  config.n = 3;
  const ResultRow row = run_experiment(config);
  emit_csv(std::vector<ResultRow>{row}, path);
  {
    std::ifstream in(path);
    std::string header, data;
    REQUIRE(std::getline(in, header));
    REQUIRE(std::getline(in, data));
    const auto header_fields = split_csv(header);
    const auto data_fields = split_csv(data);
    CHECK(header_fields.size() == 13);
    REQUIRE(data_fields.size() == 13);
    CHECK(data_fields[0] == "gummel");
    CHECK(data_fields[11] == "1");
  }
  std::filesystem::remove(path);
}

TEST_CASE("csv rows are deterministic apart from the runtime column") {
  ExperimentConfig config;
  config.n = 3;
  config.L_sq = 1.5;
  const ResultRow a = run_experiment(config);
  const ResultRow b = run_experiment(config);
  auto fa = split_csv(csv_line(a));
  auto fb = split_csv(csv_line(b));
  REQUIRE(fa.size() == fb.size());
  for (size_t i = 0; i + 1 < fa.size(); ++i) CHECK(fa[i] == fb[i]);
}

TEST_CASE("diverged rows carry max_iter and unavailable error columns") {
  ExperimentConfig config;
  config.n = 4;
  config.L_sq = 40.0;
  config.settings.max_iter = 40;
  const ResultRow row = run_experiment(config);
  CHECK_FALSE(row.converged);
  CHECK(row.iterations == 40);
  CHECK_FALSE(row.has_errors);
  const auto fields = split_csv(csv_line(row));
  CHECK(fields[5] == "nan");
  CHECK(fields[11] == "0");
}

TEST_CASE("sweep iterates the cross product deterministically, n outer") {
  ExperimentConfig base;
  base.algorithm = Algorithm::gummel;
  const std::vector<int> ns = {3, 4};
  const std::vector<double> lsqs = {1.0, 1.5};
  const auto rows = sweep(base, ns, lsqs);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].h_label == doctest::Approx(1.0 / 3.0));
  CHECK(rows[0].L_sq == 1.0);
  CHECK(rows[1].h_label == doctest::Approx(1.0 / 3.0));
  CHECK(rows[1].L_sq == 1.5);
  CHECK(rows[2].h_label == doctest::Approx(0.25));
  CHECK(rows[2].L_sq == 1.0);
  CHECK(rows[3].h_label == doctest::Approx(0.25));
  CHECK(rows[3].L_sq == 1.5);
}

TEST_CASE("algorithm and mesh names round-trip") {
  for (const char* name :
       {"gummel", "relaxed", "accel1", "accel2", "adaptive", "gfas", "afas", "tg"})
    CHECK(algorithm_to_string(algorithm_from_string(name)) == name);
  CHECK_THROWS_AS(algorithm_from_string("newton"), std::invalid_argument);
  for (const char* name : {"uniform", "kershaw", "perturbed", "file"})
    CHECK(mesh_kind_to_string(mesh_kind_from_string(name)) == name);
  CHECK_THROWS_AS(mesh_kind_from_string("moebius"), std::invalid_argument);
}
