#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "ddet/errors.hpp"
#include "ddet/problem.hpp"
#include "ddet/transport.hpp"

using namespace ddet;
using namespace ddet::setup;
using namespace ddet::transport;

namespace {

constexpr double kC = 29.9792458;

TransportSolver make_solver(int nx, int ny, const std::string& quad, std::vector<double> groups,
                            double width = 1.0) {
  return TransportSolver(SpatialMesh::uniform(nx, ny, width / nx, width / ny),
                         build_quadrature(QuadratureSpec::parse(quad)), FrequencyGrid(std::move(groups)),
                         MaterialModel{});
}

IntensityField random_field(const TransportSolver& s, std::mt19937& rng, double lo = 0.1,
                            double hi = 2.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  IntensityField f = s.make_field();
  for (double& v : f.data()) v = u(rng);
  return f;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a[i] - b[i]) / std::max(std::abs(b[i]), 1e-300));
  return m;
}

// Upwind face value seen by direction d on face f, built from corner values.
double trace_oracle(const TransportSolver& s, const IntensityField& field, const BoundarySource& bc,
                    int g, std::size_t m, std::size_t f) {
  const auto& mesh = s.mesh();
  const auto& d = s.quadrature()[m];
  const auto corner = [&](int i, int j, int k) { return field.at(g, m, mesh.cell(i, j), k); };
  if (f < mesh.num_vfaces()) {
    const int i = static_cast<int>(f % (mesh.nx() + 1)), j = static_cast<int>(f / (mesh.nx() + 1));
    if (d.ox > 0) return i == 0 ? bc.incoming(Side::kLeft, g) : 0.5 * (corner(i - 1, j, 1) + corner(i - 1, j, 3));
    return i == mesh.nx() ? bc.incoming(Side::kRight, g) : 0.5 * (corner(i, j, 0) + corner(i, j, 2));
  }
  const std::size_t h = f - mesh.num_vfaces();
  const int i = static_cast<int>(h % mesh.nx()), j = static_cast<int>(h / mesh.nx());
  if (d.oy > 0) return j == 0 ? bc.incoming(Side::kBottom, g) : 0.5 * (corner(i, j - 1, 2) + corner(i, j - 1, 3));
  return j == mesh.ny() ? bc.incoming(Side::kTop, g) : 0.5 * (corner(i, j, 0) + corner(i, j, 1));
}

}  // namespace

TEST_SUITE("transport") {

TEST_CASE("intensity dof count") {
  CHECK(IntensityField::dof_count(20, 20, 17, 144) == 3916800);
  const TransportSolver s = make_solver(3, 2, "product-2x2", {0.7, 1.0e7});
  CHECK(s.make_field().size() == IntensityField::dof_count(3, 2, 2, 16));
}

TEST_CASE("equilibrium is a fixed point of the sweep") {
  for (double t : {0.001, 0.1, 1.0}) {
    CAPTURE(t);
    TransportSolver s = make_solver(4, 3, "triangular-4", {0.7075, 2.830, 6.898, 1.0e7});
    const BoundarySource bc = BoundarySource::blackbody({true, true, true, true}, t, s.grid(), Constants{});
    const IntensityField prev = s.equilibrium_field(t);
    const IntensityField out = s.sweep(std::vector<double>(s.mesh().num_cells(), t), prev, 0.02, bc);
    CHECK(max_rel_diff(out.data(), prev.data()) < 1e-12);
  }
}

TEST_CASE("no opacity, no source, vacuum boundary gives zero") {
  TransportSolver s = make_solver(3, 3, "product-2x2", {1.0e7});
  const std::size_t n = s.mesh().num_cells();
  const IntensityField out = s.sweep_sources(std::vector<double>(n, 0.0), std::vector<double>(n, 0.0),
                                             s.make_field(0.0), 0.05, BoundarySource::vacuum(1));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("single cell corner system matches a dense oracle") {
  // One cell, every direction of the 4-direction set, uniform sources.
  TransportSolver s(SpatialMesh::uniform(1, 1, 0.7, 0.4), build_quadrature(QuadratureSpec::parse("s2")),
                    FrequencyGrid({1.0e7}), MaterialModel{});
  const double kappa = 3.0, planck = 0.8, dt = 0.01;
  BoundarySource bc = BoundarySource::vacuum(1);
  bc.intensity[0][0] = 1.3;  // left
  bc.intensity[1][0] = 0.2;  // bottom
  bc.intensity[2][0] = 0.6;  // right
  bc.intensity[3][0] = 0.9;  // top
  std::mt19937 rng(7);
  const IntensityField prev = random_field(s, rng);
  const IntensityField out = s.sweep_sources({kappa}, {planck}, prev, dt, bc);

  const double hx = 0.35, hy = 0.2, area = hx * hy, inv = 1.0 / (kC * dt);
  for (std::size_t m = 0; m < s.quadrature().size(); ++m) {
    const auto& d = s.quadrature()[m];
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    Eigen::Vector4d b;
    for (int k = 0; k < 4; ++k) {
      a(k, k) = (kappa + inv) * area;
      b(k) = area * (kappa * planck + inv * prev.at(0, m, 0, k));
    }
    // Sub-faces of each corner: (corner, outward normal, length, neighbour or -1 for outer).
    struct Sub {
      int corner, nbr;
      double nx, ny, len;
    };
    std::vector<Sub> subs;
    for (int k = 0; k < 4; ++k) {
      const int ix = k % 2, iy = k / 2;
      subs.push_back({k, -1, ix ? 1.0 : -1.0, 0.0, hy});
      subs.push_back({k, -1, 0.0, iy ? 1.0 : -1.0, hx});
      subs.push_back({k, (1 - ix) + 2 * iy, ix ? -1.0 : 1.0, 0.0, hy});
      subs.push_back({k, ix + 2 * (1 - iy), 0.0, iy ? -1.0 : 1.0, hx});
    }
    for (const Sub& sb : subs) {
      const double flow = (d.ox * sb.nx + d.oy * sb.ny) * sb.len;
      if (sb.nbr >= 0) {
        a(sb.corner, sb.corner) += 0.5 * flow;
        a(sb.corner, sb.nbr) += 0.5 * flow;
      } else if (flow > 0) {
        a(sb.corner, sb.corner) += flow;
      } else {
        const Side side = sb.nx < 0 ? Side::kLeft : sb.nx > 0 ? Side::kRight : sb.ny < 0 ? Side::kBottom : Side::kTop;
        b(sb.corner) -= flow * bc.incoming(side, 0);
      }
    }
    const Eigen::Vector4d x = a.fullPivLu().solve(b);
    for (int k = 0; k < 4; ++k) CHECK(out.at(0, m, 0, k) == doctest::Approx(x(k)).epsilon(1e-12));
  }
}

TEST_CASE("sweep order within the upwind partial order does not change the result") {
  TransportSolver s = make_solver(5, 4, "triangular-4", {0.7075, 2.830, 1.0e7});
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> ut(0.05, 1.0);
  std::vector<double> t(s.mesh().num_cells());
  for (double& v : t) v = ut(rng);
  const IntensityField prev = random_field(s, rng);
  const BoundarySource bc = BoundarySource::blackbody({true, false, false, true}, 1.0, s.grid(), Constants{});
  const IntensityField a = s.sweep(t, prev, 0.02, bc);
  s.set_sweep_order(SweepOrder::kWavefront);
  const IntensityField b = s.sweep(t, prev, 0.02, bc);
  CHECK(max_rel_diff(b.data(), a.data()) <= 1e-14);
  s.set_threads(3);
  const IntensityField c = s.sweep(t, prev, 0.02, bc);
  CHECK(c.data() == b.data());
}

TEST_CASE("zeroth moment balance per cell") {
  TransportSolver s = make_solver(4, 4, "product-2x2", {0.7075, 2.830, 1.0e7});
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> ut(0.1, 1.0);
  std::vector<double> t(s.mesh().num_cells());
  for (double& v : t) v = ut(rng);
  const double dt = 0.02;
  const IntensityField prev = random_field(s, rng);
  const BoundarySource bc = BoundarySource::blackbody({true, false, false, false}, 1.0, s.grid(), Constants{});
  const IntensityField out = s.sweep(t, prev, dt, bc);
  const std::vector<double> kap = s.opacities(t), b = s.planck(t);
  const auto& mesh = s.mesh();
  const std::size_t nc = mesh.num_cells();
  for (int g = 0; g < s.grid().num_groups(); ++g) {
    for (int j = 0; j < mesh.ny(); ++j) {
      for (int i = 0; i < mesh.nx(); ++i) {
        const std::size_t c = mesh.cell(i, j);
        const double k = kap[g * nc + c], area = mesh.cell_area(i, j);
        double res = 0.0, scale = 0.0;
        for (std::size_t m = 0; m < s.quadrature().size(); ++m) {
          const auto& d = s.quadrature()[m];
          const double cell = out.cell_value(g, m, c), old = prev.cell_value(g, m, c);
          double leak = 0.0;
          for (Side side : kSides) {
            const double nx = side == Side::kLeft ? -1 : side == Side::kRight ? 1 : 0;
            const double ny = side == Side::kBottom ? -1 : side == Side::kTop ? 1 : 0;
            const double on = d.ox * nx + d.oy * ny;
            // Two half-faces per side, each with its corner (outflow) or the upwind trace.
            const int c0 = side == Side::kLeft ? 0 : side == Side::kRight ? 1 : side == Side::kBottom ? 0 : 2;
            const int c1 = side == Side::kLeft ? 2 : side == Side::kRight ? 3 : side == Side::kBottom ? 1 : 3;
            const double half = 0.5 * mesh.face_length(i, j, side);
            double v0, v1;
            if (on > 0) {
              v0 = out.at(g, m, c, c0);
              v1 = out.at(g, m, c, c1);
            } else {
              const int ni = i + static_cast<int>(nx), nj = j + static_cast<int>(ny);
              if (ni < 0 || nj < 0 || ni >= mesh.nx() || nj >= mesh.ny()) {
                v0 = v1 = bc.incoming(side, g);
              } else {
                const std::size_t nc2 = mesh.cell(ni, nj);
                const int m0 = nx != 0 ? (c0 ^ 1) : (c0 ^ 2), m1 = nx != 0 ? (c1 ^ 1) : (c1 ^ 2);
                v0 = out.at(g, m, nc2, m0);
                v1 = out.at(g, m, nc2, m1);
              }
            }
            leak += on * half * (v0 + v1);
          }
          const double terms[] = {area * (cell - old) / (kC * dt), area * k * cell, area * k * b[g * nc + c], leak};
          res += d.weight * (terms[0] + terms[1] - terms[2] + terms[3]);
          for (double x : terms) scale += d.weight * std::abs(x);
        }
        CHECK(std::abs(res) <= 1e-11 * scale);
      }
    }
  }
}

TEST_CASE("isotropic intensity gives diag(1/3) and C = 1/2") {
  for (const char* quad : {"product-2x2", "triangular-4", "triangular-8"}) {
    CAPTURE(quad);
    TransportSolver s = make_solver(3, 2, quad, {0.7, 1.0e7});
    const BoundarySource bc = BoundarySource::blackbody({true, true, true, true}, 0.5, s.grid(), Constants{});
    const ClosureRecord r = s.compute_closures(s.equilibrium_field(0.5), bc);
    for (double v : r.fxx_c) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    for (double v : r.fyy_c) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    for (double v : r.fxx_v) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    for (double v : r.fyy_h) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
    for (double v : r.fxy_v) CHECK(std::abs(v) < 1e-10);
    for (double v : r.fxy_h) CHECK(std::abs(v) < 1e-10);
    for (double v : r.boundary) CHECK(v == doctest::Approx(0.5).epsilon(1e-10));
    const ClosureRecord iso = ClosureRecord::isotropic(3, 2, 2);
    CHECK(iso.boundary.size() == r.boundary.size());
  }
}

TEST_CASE("a single-direction beam gives direction products") {
  TransportSolver s = make_solver(2, 2, "triangular-4", {1.0e7});
  const std::size_t m0 = 3;
  const auto& d = s.quadrature()[m0];
  REQUIRE(d.ox > 0);
  REQUIRE(d.oy > 0);
  IntensityField f = s.make_field(0.0);
  for (std::size_t c = 0; c < 4; ++c)
    for (int k = 0; k < 4; ++k) f.at(0, m0, c, k) = 2.0;
  // Inflow faces of m0 see vacuum, so those traces fall back to isotropic; cells do not.
  s.set_empty_fallback(true);
  const ClosureRecord r = s.compute_eddington(f, BoundarySource::vacuum(1));
  for (double v : r.fxx_c) CHECK(v == doctest::Approx(d.ox * d.ox).epsilon(1e-14));
  for (double v : r.fyy_c) CHECK(v == doctest::Approx(d.oy * d.oy).epsilon(1e-14));

  ClosureRecord b = ClosureRecord::zeros(2, 2, 1);
  s.compute_boundary_factors(f, b);
  for (int k = 0; k < 2; ++k) {
    CHECK(b.bfactor(0, Side::kRight, k) == doctest::Approx(d.ox).epsilon(1e-14));
    CHECK(b.bfactor(0, Side::kTop, k) == doctest::Approx(d.oy).epsilon(1e-14));
  }
  s.set_empty_fallback(false);
  CHECK_THROWS_AS(s.compute_boundary_factors(f, b), DegenerateError);
}

TEST_CASE("closures match direct summation on random intensities") {
  TransportSolver s = make_solver(2, 2, "triangular-4", {0.7, 3.0, 1.0e7});
  std::mt19937 rng(42);
  const IntensityField f = random_field(s, rng);
  BoundarySource bc = BoundarySource::blackbody({true, false, true, false}, 0.7, s.grid(), Constants{});
  const ClosureRecord r = s.compute_closures(f, bc);
  const auto& mesh = s.mesh();
  const auto& q = s.quadrature();
  const std::size_t nc = mesh.num_cells(), nv = mesh.num_vfaces(), nh = mesh.num_hfaces();
  for (int g = 0; g < 3; ++g) {
    for (std::size_t c = 0; c < nc; ++c) {
      double s0 = 0, sxx = 0, syy = 0, szz = 0;
      for (std::size_t m = 0; m < q.size(); ++m) {
        double v = 0;
        for (int k = 0; k < 4; ++k) v += 0.25 * f.at(g, m, c, k);
        s0 += q[m].weight * v;
        sxx += q[m].weight * q[m].ox * q[m].ox * v;
        syy += q[m].weight * q[m].oy * q[m].oy * v;
        szz += q[m].weight * q[m].oz * q[m].oz * v;
      }
      CHECK(r.fxx_c[g * nc + c] == doctest::Approx(sxx / s0).epsilon(1e-13));
      CHECK(r.fyy_c[g * nc + c] == doctest::Approx(syy / s0).epsilon(1e-13));
      CHECK(r.fxx_c[g * nc + c] + r.fyy_c[g * nc + c] + szz / s0 == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (std::size_t face = 0; face < nv + nh; ++face) {
      double s0 = 0, snn = 0, sxy = 0;
      for (std::size_t m = 0; m < q.size(); ++m) {
        const double v = trace_oracle(s, f, bc, g, m, face);
        const double on = face < nv ? q[m].ox : q[m].oy;
        s0 += q[m].weight * v;
        snn += q[m].weight * on * on * v;
        sxy += q[m].weight * q[m].ox * q[m].oy * v;
      }
      if (face < nv) {
        CHECK(r.fxx_v[g * nv + face] == doctest::Approx(snn / s0).epsilon(1e-13));
        CHECK(r.fxy_v[g * nv + face] == doctest::Approx(sxy / s0).epsilon(1e-13));
        CHECK(r.fxy_v[g * nv + face] * r.fxy_v[g * nv + face] <= r.fxx_v[g * nv + face] + 1e-15);
      } else {
        CHECK(r.fyy_h[g * nh + face - nv] == doctest::Approx(snn / s0).epsilon(1e-13));
        CHECK(r.fxy_h[g * nh + face - nv] == doctest::Approx(sxy / s0).epsilon(1e-13));
      }
    }
    // Right boundary: outgoing directions have ox > 0; trace from corners 1 and 3.
    for (int j = 0; j < mesh.ny(); ++j) {
      double num = 0, den = 0;
      for (std::size_t m = 0; m < q.size(); ++m) {
        if (q[m].ox <= 0) continue;
        const std::size_t c = mesh.cell(mesh.nx() - 1, j);
        const double v = 0.5 * (f.at(g, m, c, 1) + f.at(g, m, c, 3));
        num += q[m].weight * q[m].ox * v;
        den += q[m].weight * v;
      }
      CHECK(r.bfactor(g, Side::kRight, j) == doctest::Approx(num / den).epsilon(1e-13));
    }
    for (double c : r.boundary) {
      CHECK(c > 0.0);
      CHECK(c < 1.0);
    }
  }
  const ClosureBounds bounds = check_closure_bounds(r);
  CHECK(bounds.diagonal_out_of_range == 0);
  CHECK(bounds.boundary_out_of_range == 0);
}

TEST_CASE("absent radiation") {
  TransportSolver s = make_solver(2, 1, "product-2x2", {1.0e7});
  const IntensityField zero = s.make_field(0.0);
  CHECK_THROWS_AS(s.compute_eddington(zero, BoundarySource::vacuum(1)), DegenerateError);
  s.set_empty_fallback(true);
  std::size_t used = 0;
  const ClosureRecord r = s.compute_closures(zero, BoundarySource::vacuum(1), &used);
  CHECK(used > 0);
  for (double v : r.fxx_c) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  IntensityField neg = s.make_field(-1.0);
  CHECK_THROWS_AS(s.compute_eddington(neg, BoundarySource::vacuum(1)), DegenerateError);
}

TEST_CASE("sweep argument checks") {
  TransportSolver s = make_solver(2, 2, "product-2x2", {1.0e7});
  const IntensityField prev = s.make_field(0.0);
  const BoundarySource bc = BoundarySource::vacuum(1);
  CHECK_THROWS_AS(s.sweep({1.0, 1.0, 1.0}, prev, 0.1, bc), ShapeError);
  CHECK_THROWS_AS(s.sweep({1.0, 1.0, 0.0, 1.0}, prev, 0.1, bc), DomainError);
  CHECK_THROWS_AS(s.sweep({1.0, 1.0, 1.0, 1.0}, prev, 0.0, bc), DomainError);
  const IntensityField wrong(2, 16, 4);
  CHECK_THROWS_AS(s.sweep({1.0, 1.0, 1.0, 1.0}, wrong, 0.1, bc), ShapeError);
}

}  // TEST_SUITE
