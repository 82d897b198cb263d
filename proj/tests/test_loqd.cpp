#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "ddet/errors.hpp"
#include "ddet/loqd.hpp"
#include "ddet/problem.hpp"
#include "ddet/transport.hpp"

using namespace ddet;
using namespace ddet::setup;
using namespace ddet::loqd;
using ddet::transport::BoundarySource;
using ddet::transport::ClosureRecord;

namespace {

const Constants kK{};

double bisect(const std::function<double(double)>& f, double lo, double hi) {
  double flo = f(lo);
  REQUIRE(flo * f(hi) < 0.0);
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi), fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

GreyState grey_equilibrium(const SpatialMesh& mesh, double t) {
  const std::size_t nf = mesh.num_vfaces() + mesh.num_hfaces();
  const double e = kK.a_r * t * t * t * t;
  return {std::vector<double>(mesh.num_cells(), e), std::vector<double>(nf, e),
          std::vector<double>(nf, 0.0), std::vector<double>(mesh.num_cells(), t)};
}

struct Setup {
  SpatialMesh mesh = SpatialMesh::uniform(3, 4, 0.5, 0.4);
  AngularQuadrature quad = build_quadrature(QuadratureSpec::parse("product-2x2"));
  FrequencyGrid grid{{0.7075, 2.830, 1.0e7}};
  MaterialModel material{};
};

}  // namespace

TEST_SUITE("loqd") {

TEST_CASE("multigroup equilibrium is a fixed point") {
  Setup s;
  for (double t : {0.01, 1.0}) {
    CAPTURE(t);
    const auto prev = MultigroupMoments::equilibrium(s.mesh, s.grid, t, kK);
    const auto mat = group_material(std::vector<double>(s.mesh.num_cells(), t), s.grid, s.material);
    const auto bc = BoundarySource::blackbody({true, true, true, true}, t, s.grid, kK);
    const auto inflow = BoundaryInflow::from_source(s.mesh, s.quad, bc, kK);
    const auto closure = ClosureRecord::isotropic(s.mesh.nx(), s.mesh.ny(), s.grid.num_groups());
    const auto out = solve_multigroup_loqd(s.mesh, closure, mat, prev, inflow, 0.02, kK);
    for (int g = 0; g < s.grid.num_groups(); ++g) {
      const double e = 4.0 * std::numbers::pi * planck_group(t, g, s.grid, kK) / kK.c;
      for (std::size_t c = 0; c < out.cells; ++c) CHECK(out.ec(g, c) == doctest::Approx(e).epsilon(1e-10));
      for (std::size_t f = 0; f < out.faces; ++f) {
        CHECK(out.ef(g, f) == doctest::Approx(e).epsilon(1e-10));
        CHECK(std::abs(out.ff(g, f)) <= 1e-10 * kK.c * e);
      }
    }
  }
}

TEST_CASE("multigroup solve is linear in its sources and satisfies its equations") {
  Setup s;
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ut(0.2, 1.0);
  std::vector<double> t(s.mesh.num_cells());
  for (double& v : t) v = ut(rng);
  auto mat = group_material(t, s.grid, s.material);
  auto prev = MultigroupMoments::equilibrium(s.mesh, s.grid, 0.3, kK);
  for (double& v : prev.e_cell) v *= ut(rng);
  const auto bc = BoundarySource::blackbody({true, false, false, false}, 1.0, s.grid, kK);
  auto inflow = BoundaryInflow::from_source(s.mesh, s.quad, bc, kK);

  transport::TransportSolver ts(s.mesh, s.quad, s.grid, s.material);
  const auto closure = ts.compute_closures(ts.equilibrium_field(0.4), bc);
  MultigroupDiagnostics diag;
  const auto a = solve_multigroup_loqd(s.mesh, closure, mat, prev, inflow, 0.02, kK, {}, &diag);
  CHECK(diag.max_residual <= 1e-10);
  for (int g = 0; g < s.grid.num_groups(); ++g)
    CHECK(multigroup_residual(s.mesh, closure, mat, prev, inflow, 0.02, kK, a, g) <= 1e-10);

  for (double& v : mat.planck) v *= 2.0;
  for (double& v : prev.e_cell) v *= 2.0;
  for (double& v : inflow.energy) v *= 2.0;
  for (double& v : inflow.flux) v *= 2.0;
  const auto b = solve_multigroup_loqd(s.mesh, closure, mat, prev, inflow, 0.02, kK);
  for (std::size_t i = 0; i < a.e_cell.size(); ++i) CHECK(b.e_cell[i] == doctest::Approx(2.0 * a.e_cell[i]).epsilon(1e-10));
  for (std::size_t i = 0; i < a.f_face.size(); ++i)
    CHECK(std::abs(b.f_face[i] - 2.0 * a.f_face[i]) <= 1e-10 * (std::abs(a.f_face[i]) + kK.c * a.e_face[i]));

  CHECK_THROWS_AS(solve_multigroup_loqd(s.mesh, closure, mat, prev, inflow, 0.0, kK), DomainError);
}

TEST_CASE("spectrum averages follow their weights") {
  Setup s;
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::vector<double> t(s.mesh.num_cells());
  for (double& v : t) v = u(rng);
  const auto mat = group_material(t, s.grid, s.material);
  auto mg = MultigroupMoments::zeros(s.mesh, s.grid.num_groups());
  for (double& v : mg.e_cell) v = u(rng);
  for (double& v : mg.e_face) v = u(rng);
  for (double& v : mg.f_face) v = u(rng) - 0.5;
  const auto prev = mg;
  transport::TransportSolver ts(s.mesh, s.quad, s.grid, s.material);
  std::mt19937 r2(1);
  auto field = ts.make_field();
  for (double& v : field.data()) v = u(r2);
  const auto bc = BoundarySource::vacuum(s.grid.num_groups());
  const auto closure = ts.compute_closures(field, bc);
  const auto inflow = BoundaryInflow::from_source(s.mesh, s.quad, bc, kK);
  const auto co = compute_grey_coefficients(s.mesh, mg, mat, closure, prev, inflow, 0.02, kK);

  const std::size_t nc = s.mesh.num_cells();
  for (std::size_t c = 0; c < nc; ++c) {
    double se = 0, sb = 0, ke = 0, kb = 0, fxx = 0;
    for (int g = 0; g < 3; ++g) {
      const double e = mg.ec(g, c), b = mat.planck[g * nc + c], k = mat.kappa[g * nc + c];
      se += e;
      sb += b;
      ke += k * e;
      kb += k * b;
      fxx += closure.fxx_c[g * nc + c] * e;
    }
    CHECK(co.kappa_e[c] == doctest::Approx(ke / se).epsilon(1e-13));
    CHECK(co.kappa_b[c] == doctest::Approx(kb / sb).epsilon(1e-13));
    CHECK(co.f_xx_c[c] == doctest::Approx(fxx / se).epsilon(1e-13));
    double wsum = 0;
    for (int g = 0; g < 3; ++g) wsum += co.e_fraction[g * nc + c];
    CHECK(wsum == doctest::Approx(1.0).epsilon(1e-14));
  }
  const std::size_t nv = s.mesh.num_vfaces();
  for (std::size_t f = 0; f < nv; ++f) {
    double se = 0, fx = 0;
    for (int g = 0; g < 3; ++g) {
      se += mg.ef(g, f);
      fx += closure.fxx_v[g * nv + f] * mg.ef(g, f);
    }
    CHECK(co.f_xx_v[f] == doctest::Approx(fx / se).epsilon(1e-13));
  }
}

TEST_CASE("one group or constant opacity leaves the group values unchanged") {
  Setup s;
  FrequencyGrid one({1.0e7});
  const std::size_t nc = s.mesh.num_cells();
  std::vector<double> t(nc, 0.5);
  const auto mat = group_material(t, one, s.material);
  auto mg = MultigroupMoments::equilibrium(s.mesh, one, 0.7, kK);
  const auto closure = ClosureRecord::isotropic(s.mesh.nx(), s.mesh.ny(), 1);
  const auto inflow = BoundaryInflow::from_source(s.mesh, s.quad, BoundarySource::vacuum(1), kK);
  const auto co = compute_grey_coefficients(s.mesh, mg, mat, closure, mg, inflow, 0.02, kK);
  for (std::size_t c = 0; c < nc; ++c) {
    CHECK(co.kappa_e[c] == doctest::Approx(mat.kappa[c]).epsilon(1e-14));
    CHECK(co.kappa_b[c] == doctest::Approx(mat.kappa[c]).epsilon(1e-14));
    CHECK(co.f_xx_c[c] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  for (double v : co.c_bar) CHECK(v == doctest::Approx(0.5).epsilon(1e-14));

  // Same kappa in every group: both averages equal it whatever the spectrum.
  GroupMaterial same = group_material(t, s.grid, s.material);
  for (double& k : same.kappa) k = 4.5;
  auto mg3 = MultigroupMoments::equilibrium(s.mesh, s.grid, 0.3, kK);
  const auto cl3 = ClosureRecord::isotropic(s.mesh.nx(), s.mesh.ny(), 3);
  const auto in3 = BoundaryInflow::from_source(s.mesh, s.quad, BoundarySource::vacuum(3), kK);
  const auto co3 = compute_grey_coefficients(s.mesh, mg3, same, cl3, mg3, in3, 0.02, kK);
  for (std::size_t c = 0; c < nc; ++c) {
    CHECK(co3.kappa_e[c] == doctest::Approx(4.5).epsilon(1e-14));
    CHECK(co3.kappa_b[c] == doctest::Approx(4.5).epsilon(1e-14));
  }
}

TEST_CASE("material energy balance against bisection") {
  const double cv = 0.5917 * kK.a_r;
  for (double e : {1e-6, 0.01372, 0.5}) {
    for (double told : {0.01, 0.3, 1.0}) {
      CAPTURE(e);
      CAPTURE(told);
      const double ke = 7.0, kb = 3.0, dt = 0.01;
      const auto f = [&](double t) { return cv / dt * (t - told) - kK.c * ke * e + kK.c * kb * kK.a_r * std::pow(t, 4); };
      const double ref = bisect(f, 1e-12, 100.0);
      const MebSolution m = solve_meb(e, told, ke, kb, dt, cv, kK);
      CHECK(m.temperature == doctest::Approx(ref).epsilon(1e-13));
      const double h = 1e-4 * e;
      const double fd = (solve_meb(e + h, told, ke, kb, dt, cv, kK).temperature -
                         solve_meb(e - h, told, ke, kb, dt, cv, kK).temperature) / (2 * h);
      CHECK(m.dtde == doctest::Approx(fd).epsilon(1e-5));
    }
  }
  CHECK_THROWS_AS(solve_meb(1.0, 1.0, 1.0, 1.0, 0.0, cv, kK), DomainError);
}

TEST_CASE("spectral material energy balance against bisection") {
  FrequencyGrid grid({0.7075, 2.830, 6.898, 1.0e7});
  MaterialModel mat{};
  const double dt = 0.02;
  const std::vector<double> w = {0.1, 0.4, 0.3, 0.2};
  for (double e : {1e-4, 0.01372}) {
    for (double told : {0.05, 0.5}) {
      CAPTURE(e);
      CAPTURE(told);
      const auto f = [&](double t) {
        const auto gm = group_material({t}, grid, mat);
        double r = mat.cv / dt * (t - told);
        for (int g = 0; g < 4; ++g)
          r += -kK.c * gm.kappa[g] * w[g] * e + 4.0 * std::numbers::pi * gm.kappa[g] * gm.planck[g];
        return r;
      };
      const double ref = bisect(f, 1e-3, 2.0);
      for (double guess : {told, 1.5 * ref, 0.6 * ref}) {
        const MebSolution m = solve_meb_spectral(e, told, w, dt, mat.cv, grid, mat, guess);
        CHECK(m.temperature == doctest::Approx(ref).epsilon(1e-12));
        CHECK(m.dtde > 0.0);
      }
    }
  }
  CHECK_THROWS_AS(solve_meb_spectral(1.0, 1.0, {1.0}, dt, mat.cv, grid, mat, 1.0), ShapeError);
  CHECK_THROWS_AS(solve_meb_spectral(1.0, 1.0, w, 0.0, mat.cv, grid, mat, 1.0), DomainError);
}

TEST_CASE("grey problem at equilibrium stays there") {
  Setup s;
  const double t = 0.8;
  const auto mg = MultigroupMoments::equilibrium(s.mesh, s.grid, t, kK);
  const auto mat = group_material(std::vector<double>(s.mesh.num_cells(), t), s.grid, s.material);
  const auto bc = BoundarySource::blackbody({true, true, true, true}, t, s.grid, kK);
  const auto inflow = BoundaryInflow::from_source(s.mesh, s.quad, bc, kK);
  const auto closure = ClosureRecord::isotropic(s.mesh.nx(), s.mesh.ny(), 3);
  const auto co = compute_grey_coefficients(s.mesh, mg, mat, closure, mg, inflow, 0.02, kK);
  const GreyState eq = grey_equilibrium(s.mesh, t);
  for (bool spectral : {false, true}) {
    GreyOptions opt;
    if (spectral) {
      opt.grid = &s.grid;
      opt.material = &s.material;
    }
    const GreyState out = solve_grey_problem(s.mesh, co, eq, eq, 0.02, s.material.cv, kK, opt);
    for (std::size_t c = 0; c < out.temperature.size(); ++c) {
      CHECK(out.temperature[c] == doctest::Approx(t).epsilon(1e-12));
      CHECK(out.e_cell[c] == doctest::Approx(eq.e_cell[0]).epsilon(1e-11));
    }
    for (double v : out.f_face) CHECK(std::abs(v) <= 1e-10 * kK.c * eq.e_cell[0]);
  }
}

TEST_CASE("grey solution satisfies the grey and material equations") {
  Setup s;
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> u(0.2, 0.6);
  std::vector<double> t(s.mesh.num_cells());
  for (double& v : t) v = u(rng);
  const auto mat = group_material(t, s.grid, s.material);
  auto prev_mg = MultigroupMoments::equilibrium(s.mesh, s.grid, 0.3, kK);
  const auto bc = BoundarySource::blackbody({true, false, false, false}, 1.0, s.grid, kK);
  const auto inflow = BoundaryInflow::from_source(s.mesh, s.quad, bc, kK);
  transport::TransportSolver ts(s.mesh, s.quad, s.grid, s.material);
  const auto closure = ts.compute_closures(ts.equilibrium_field(0.5), bc);
  const auto mg = solve_multigroup_loqd(s.mesh, closure, mat, prev_mg, inflow, 0.02, kK);
  const auto co = compute_grey_coefficients(s.mesh, mg, mat, closure, prev_mg, inflow, 0.02, kK);
  GreyState prev = grey_equilibrium(s.mesh, 0.3);
  prev.temperature = t;
  prev.e_cell = prev_mg.total_e_cell();
  GreyDiagnostics diag;
  const GreyState out = solve_grey_problem(s.mesh, co, prev, prev, 0.02, s.material.cv, kK, {}, &diag);
  CHECK(diag.iterations >= 1);
  CHECK(diag.history.back() <= 1e-13);
  CHECK(grey_residual(s.mesh, co, prev.e_cell, out, 0.02, kK) <= 1e-11);
  CHECK(meb_residual(co, prev, out, 0.02, s.material.cv, kK) <= 1e-12);
  for (double v : out.temperature) CHECK(v > 0.0);
}

}  // TEST_SUITE
