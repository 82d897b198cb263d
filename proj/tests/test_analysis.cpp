#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include "ddet/analysis.hpp"
#include "ddet/errors.hpp"

using namespace ddet;
using namespace ddet::analysis;

TEST_SUITE("analysis") {

TEST_CASE("relative error") {
  CHECK(relative_error({1.0, 0.0}, {1.0, 1.0}) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(relative_error({1.01, 2.02, 3.03}, {1.0, 2.0, 3.0}) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(relative_error({4.0, 5.0}, {4.0, 5.0}) == 0.0);
  CHECK_THROWS_AS(relative_error({1.0}, {0.0}), DegenerateError);
  CHECK_THROWS_AS(relative_error({1.0, 2.0}, {1.0}), ShapeError);
}

TEST_CASE("right boundary averages") {
  const setup::SpatialMesh mesh({1.0, 2.0}, {0.5, 1.5, 1.0});
  const std::size_t nf = mesh.num_faces();
  loqd::GreyState s{std::vector<double>(mesh.num_cells(), 2.0), std::vector<double>(nf, 3.0),
                    std::vector<double>(nf, 4.0), std::vector<double>(mesh.num_cells(), 0.5)};
  // Distinct values on the right faces and right column to check the dy weights.
  const double fr[] = {1.0, 2.0, 3.0};
  for (int j = 0; j < 3; ++j) {
    s.f_face[mesh.vface(2, j)] = fr[j];
    s.e_face[mesh.vface(2, j)] = 10.0 * fr[j];
    s.temperature[mesh.cell(1, j)] = fr[j] * 0.1;
  }
  const double mean = (0.5 * 1.0 + 1.5 * 2.0 + 1.0 * 3.0) / 3.0;
  const BreakoutSeries b = boundary_averages(mesh, {s, s}, {0.1, 0.2});
  REQUIRE(b.f_r.size() == 2);
  CHECK(b.f_r[0] == doctest::Approx(mean).epsilon(1e-15));
  CHECK(b.e_r[1] == doctest::Approx(10.0 * mean).epsilon(1e-15));
  CHECK(b.t_r[0] == doctest::Approx(0.1 * mean).epsilon(1e-15));
  CHECK(b.time[1] == 0.2);

  std::ostringstream out;
  write_breakout_csv(out, b);
  CHECK(out.str().find('\n') != std::string::npos);
}

TEST_CASE("breakout time") {
  const std::vector<double> t = {0.0, 1.0, 2.0, 3.0};
  const std::vector<double> v = {0.0, 1.0, 2.0, 3.0};
  const Breakout b = breakout_time(t, v, 1.5);
  CHECK(b.reached);
  CHECK(b.step == 2);
  CHECK(b.time == 2.0);
  CHECK(b.interpolated == doctest::Approx(1.5));
  const Breakout exact = breakout_time(t, v, 1.0);
  CHECK(exact.step == 1);
  const Breakout never = breakout_time(t, v, 4.0);
  CHECK_FALSE(never.reached);
  CHECK(never.step == -1);
  CHECK_THROWS_AS(breakout_time(t, {1.0}, 0.5), ShapeError);

  std::ostringstream out;
  write_breakout_result(out, "F", 4.0, never);
  CHECK(out.str().find("not reached") != std::string::npos);
}

TEST_CASE("singular value report") {
  std::mt19937 rng(3);
  std::normal_distribution<double> d;
  lowrank::SnapshotMatrix m;
  m.name = "fxx_c";
  m.data.resize(12, 9);
  // Large constant part plus small variation.
  for (Eigen::Index j = 0; j < 9; ++j)
    for (Eigen::Index i = 0; i < 12; ++i) m.data(i, j) = 1.0 / 3.0 + 1e-3 * d(rng) * std::pow(0.5, j);
  m.dt = 0.1;
  const auto rep = singular_value_report({m});
  REQUIRE(rep.size() == 1);
  const SingularValueEntry& e = rep[0];
  CHECK(e.rows == 12);
  CHECK(e.cols == 9);
  CHECK(e.sigma_centered(0) < e.sigma(0));
  CHECK(e.sigma_history.size() <= 8);
  REQUIRE(e.pod_ranks.size() == xi_grid().size());
  REQUIRE(e.dmd_ranks.size() == xi_grid_dmd().size());
  for (std::size_t i = 1; i < e.pod_ranks.size(); ++i) CHECK(e.pod_ranks[i] >= e.pod_ranks[i - 1]);
  for (std::size_t i = 1; i < e.dmd_ranks.size(); ++i) CHECK(e.dmd_ranks[i] >= e.dmd_ranks[i - 1]);
  CHECK(xi_grid().front() == 1e-2);
  CHECK(xi_grid().back() == 1e-16);
  CHECK(xi_grid_dmd().back() == 1e-18);

  std::ostringstream sig, rank;
  write_sigma_csv(sig, rep);
  write_rank_csv(rank, rep);
  CHECK(sig.str().find("fxx_c") != std::string::npos);
  CHECK(rank.str().find("dmd-e") != std::string::npos);
}

}  // TEST_SUITE
