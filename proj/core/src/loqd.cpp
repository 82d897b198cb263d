#include "ddet/loqd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <limits>
#include <string>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "ddet/errors.hpp"
#include "parallel.hpp"

namespace ddet::loqd {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;

double side_sign(Side s) { return (s == Side::kRight || s == Side::kTop) ? 1.0 : -1.0; }
bool is_vertical(Side s) { return s == Side::kLeft || s == Side::kRight; }

// Coefficients of one linear LOQD system (one group, or the linear part of
// the grey problem).
struct Coeffs {
  std::vector<double> cell_diag, cell_rhs;                      // Dc
  std::vector<double> a_t, d_face, d_cell, x_hi, x_lo, hc_rhs;  // 4 Dc
  std::vector<double> bc_c, bc_rhs;                             // boundary slots

  void resize(std::size_t cells, std::size_t slots) {
    cell_diag.assign(cells, 0.0);
    cell_rhs.assign(cells, 0.0);
    for (auto* v : {&a_t, &d_face, &d_cell, &x_hi, &x_lo, &hc_rhs}) v->assign(4 * cells, 0.0);
    bc_c.assign(slots, 0.0);
    bc_rhs.assign(slots, 0.0);
  }
};

struct Geometry {
  std::size_t cells = 0;
  std::size_t faces = 0;
  std::size_t slots = 0;
  std::size_t unknowns() const { return cells + 2 * faces; }
  std::size_t ecol(std::size_t c) const { return c; }
  std::size_t efcol(std::size_t f) const { return cells + f; }
  std::size_t fcol(std::size_t f) const { return cells + faces + f; }
};

Geometry geometry(const SpatialMesh& mesh) {
  return {mesh.num_cells(), mesh.num_faces(),
          2 * static_cast<std::size_t>(mesh.nx() + mesh.ny())};
}

bool on_boundary(const SpatialMesh& mesh, int i, int j, Side s) {
  switch (s) {
    case Side::kLeft: return i == 0;
    case Side::kRight: return i == mesh.nx() - 1;
    case Side::kBottom: return j == 0;
    case Side::kTop: return j == mesh.ny() - 1;
  }
  return false;
}

int along(Side s, int i, int j) { return is_vertical(s) ? j : i; }

// Perpendicular faces of cell (i, j) used by the cross term of side s.
void cross_faces(const SpatialMesh& mesh, int i, int j, Side s, std::size_t& hi, std::size_t& lo) {
  if (is_vertical(s)) {
    hi = mesh.face_of_cell(i, j, Side::kTop);
    lo = mesh.face_of_cell(i, j, Side::kBottom);
  } else {
    hi = mesh.face_of_cell(i, j, Side::kRight);
    lo = mesh.face_of_cell(i, j, Side::kLeft);
  }
}

// Row of the half-cell equation on side s of a cell: interior faces carry
// the low-side cell in slot 0 and the high-side cell in slot 1; boundary
// faces carry the half-cell in slot 0 and the boundary condition in slot 1.
std::size_t half_cell_row(const Geometry& geo, const SpatialMesh& mesh, int i, int j, Side s) {
  const std::size_t f = mesh.face_of_cell(i, j, s);
  const bool high_side = (s == Side::kLeft || s == Side::kBottom) && !on_boundary(mesh, i, j, s);
  return geo.cells + 2 * f + (high_side ? 1 : 0);
}

using Triplet = Eigen::Triplet<double>;
using SparseMatrix = Eigen::SparseMatrix<double>;

void assemble(const SpatialMesh& mesh, const Coeffs& k, double c_light, SparseMatrix& a,
              Eigen::VectorXd& rhs) {
  const Geometry geo = geometry(mesh);
  const auto n = static_cast<Eigen::Index>(geo.unknowns());
  std::vector<Triplet> t;
  t.reserve(geo.cells * 5 + 4 * geo.cells * 6 + geo.slots * 2);
  rhs.setZero(n);
  const auto add = [&](std::size_t r, std::size_t col, double v) {
    t.emplace_back(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col), v);
  };
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      add(c, geo.ecol(c), k.cell_diag[c]);
      rhs(static_cast<Eigen::Index>(c)) = k.cell_rhs[c];
      for (Side s : setup::kSides) {
        const std::size_t f = mesh.face_of_cell(i, j, s);
        const double len = mesh.face_length(i, j, s);
        const double perp = is_vertical(s) ? mesh.dx(i) : mesh.dy(j);
        const double sg = side_sign(s);
        add(c, geo.fcol(f), sg * len);

        const std::size_t h = half_cell(c, s);
        const std::size_t r = half_cell_row(geo, mesh, i, j, s);
        std::size_t fhi = 0, flo = 0;
        cross_faces(mesh, i, j, s, fhi, flo);
        add(r, geo.fcol(f), k.a_t[h]);
        add(r, geo.efcol(f), c_light * sg * len * k.d_face[h]);
        add(r, geo.ecol(c), -c_light * sg * len * k.d_cell[h]);
        add(r, geo.efcol(fhi), 0.5 * c_light * perp * k.x_hi[h]);
        add(r, geo.efcol(flo), -0.5 * c_light * perp * k.x_lo[h]);
        rhs(static_cast<Eigen::Index>(r)) = k.hc_rhs[h];

        if (on_boundary(mesh, i, j, s)) {
          const std::size_t slot = boundary_slot(mesh, s, along(s, i, j));
          const std::size_t rb = geo.cells + 2 * f + 1;
          add(rb, geo.fcol(f), sg);
          add(rb, geo.efcol(f), -c_light * k.bc_c[slot]);
          rhs(static_cast<Eigen::Index>(rb)) = k.bc_rhs[slot];
        }
      }
    }
  }
  a.resize(n, n);
  a.setFromTriplets(t.begin(), t.end());
  a.makeCompressed();
}

// Row-wise max of |A x - b| / (|A| |x| + |b|).
std::string sci(double v) {
  std::ostringstream s;
  s.precision(3);
  s << std::scientific << v;
  return s.str();
}

double scaled_residual(const SparseMatrix& a, const Eigen::VectorXd& x, const Eigen::VectorXd& b,
                       const Eigen::VectorXd* extra = nullptr,
                       const Eigen::VectorXd* extra_scale = nullptr) {
  Eigen::VectorXd r = a * x - b;
  Eigen::VectorXd s = a.cwiseAbs() * x.cwiseAbs() + b.cwiseAbs();
  if (extra) r += *extra;
  if (extra_scale) s += *extra_scale;
  double worst = 0.0;
  for (Eigen::Index k = 0; k < r.size(); ++k) {
    const double v = s(k) > 0.0 ? std::abs(r(k)) / s(k) : std::abs(r(k));
    if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
    worst = std::max(worst, v);
  }
  return worst;
}

Coeffs group_coeffs(const SpatialMesh& mesh, const ClosureRecord& cl, const GroupMaterial& mat,
                    const MultigroupMoments& prev, const BoundaryInflow& inflow, double dt,
                    const Constants& k, int g) {
  const Geometry geo = geometry(mesh);
  Coeffs q;
  q.resize(geo.cells, geo.slots);
  const auto gu = static_cast<std::size_t>(g);
  const std::size_t nc = geo.cells;
  const std::size_t nv = mesh.num_vfaces();
  const std::size_t nh = mesh.num_hfaces();
  const double inv_cdt = 1.0 / (k.c * dt);
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      const double area = mesh.cell_area(i, j);
      const double kap = mat.kappa[gu * nc + c];
      q.cell_diag[c] = area * (1.0 / dt + k.c * kap);
      q.cell_rhs[c] = area * (prev.ec(g, c) / dt + kFourPi * kap * mat.planck[gu * nc + c]);
      for (Side s : setup::kSides) {
        const std::size_t f = mesh.face_of_cell(i, j, s);
        const std::size_t h = half_cell(c, s);
        const double half_area = mesh.half_cell_area(i, j);
        std::size_t fhi = 0, flo = 0;
        cross_faces(mesh, i, j, s, fhi, flo);
        q.a_t[h] = half_area * (kap + inv_cdt);
        q.hc_rhs[h] = half_area * prev.ff(g, f) * inv_cdt;
        if (is_vertical(s)) {
          q.d_face[h] = cl.fxx_v[gu * nv + f];
          q.d_cell[h] = cl.fxx_c[gu * nc + c];
          q.x_hi[h] = cl.fxy_h[gu * nh + (fhi - nv)];
          q.x_lo[h] = cl.fxy_h[gu * nh + (flo - nv)];
        } else {
          q.d_face[h] = cl.fyy_h[gu * nh + (f - nv)];
          q.d_cell[h] = cl.fyy_c[gu * nc + c];
          q.x_hi[h] = cl.fxy_v[gu * nv + fhi];
          q.x_lo[h] = cl.fxy_v[gu * nv + flo];
        }
      }
    }
  }
  for (std::size_t slot = 0; slot < geo.slots; ++slot) {
    const double cg = cl.boundary[gu * geo.slots + slot];
    q.bc_c[slot] = cg;
    q.bc_rhs[slot] = -k.c * cg * inflow.e(g, slot) + inflow.f(g, slot);
  }
  return q;
}

void check_inputs(const SpatialMesh& mesh, const ClosureRecord& closure, const GroupMaterial& mat,
                  const MultigroupMoments& prev, const BoundaryInflow& inflow, double dt) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const int ng = closure.ng;
  closure.require_shape(mesh.nx(), mesh.ny(), ng);
  const std::size_t nc = mesh.num_cells();
  const std::size_t nf = mesh.num_faces();
  const auto g = static_cast<std::size_t>(ng);
  if (mat.kappa.size() != g * nc || mat.planck.size() != g * nc)
    throw ShapeError("material arrays do not match groups x cells");
  if (prev.ng != ng || prev.e_cell.size() != g * nc || prev.e_face.size() != g * nf ||
      prev.f_face.size() != g * nf)
    throw ShapeError("previous multigroup moments do not match the layout");
  if (inflow.ng != ng || inflow.per_group != 2 * static_cast<std::size_t>(mesh.nx() + mesh.ny()))
    throw ShapeError("boundary inflow does not match the layout");
}

Eigen::VectorXd pack(const MultigroupMoments& mg, int g) {
  const std::size_t nc = mg.cells;
  const std::size_t nf = mg.faces;
  Eigen::VectorXd x(static_cast<Eigen::Index>(nc + 2 * nf));
  for (std::size_t c = 0; c < nc; ++c) x(static_cast<Eigen::Index>(c)) = mg.ec(g, c);
  for (std::size_t f = 0; f < nf; ++f) {
    x(static_cast<Eigen::Index>(nc + f)) = mg.ef(g, f);
    x(static_cast<Eigen::Index>(nc + nf + f)) = mg.ff(g, f);
  }
  return x;
}

}  // namespace

// --- layouts ----------------------------------------------------------------

std::size_t boundary_slot(const SpatialMesh& mesh, Side side, int k) {
  const auto x = static_cast<std::size_t>(mesh.nx());
  const auto y = static_cast<std::size_t>(mesh.ny());
  const auto kk = static_cast<std::size_t>(k);
  switch (side) {
    case Side::kLeft: return kk;
    case Side::kBottom: return y + kk;
    case Side::kRight: return y + x + kk;
    case Side::kTop: return 2 * y + x + kk;
  }
  return 0;
}

MultigroupMoments MultigroupMoments::zeros(const SpatialMesh& mesh, int ng) {
  if (ng < 1) throw ShapeError("group count must be positive");
  MultigroupMoments m;
  m.ng = ng;
  m.cells = mesh.num_cells();
  m.faces = mesh.num_faces();
  const auto g = static_cast<std::size_t>(ng);
  m.e_cell.assign(g * m.cells, 0.0);
  m.e_face.assign(g * m.faces, 0.0);
  m.f_face.assign(g * m.faces, 0.0);
  return m;
}

MultigroupMoments MultigroupMoments::equilibrium(const SpatialMesh& mesh,
                                                 const setup::FrequencyGrid& grid,
                                                 double temperature, const Constants& constants) {
  MultigroupMoments m = zeros(mesh, grid.num_groups());
  const std::vector<double> b = setup::planck_groups(temperature, grid, constants);
  for (int g = 0; g < m.ng; ++g) {
    const double e = kFourPi * b[static_cast<std::size_t>(g)] / constants.c;
    for (std::size_t c = 0; c < m.cells; ++c) m.ec(g, c) = e;
    for (std::size_t f = 0; f < m.faces; ++f) m.ef(g, f) = e;
  }
  return m;
}

namespace {

std::vector<double> group_sum(const std::vector<double>& v, int ng, std::size_t n) {
  std::vector<double> out(n, 0.0);
  for (int g = 0; g < ng; ++g)
    for (std::size_t p = 0; p < n; ++p) out[p] += v[static_cast<std::size_t>(g) * n + p];
  return out;
}

}  // namespace

std::vector<double> MultigroupMoments::total_e_cell() const { return group_sum(e_cell, ng, cells); }
std::vector<double> MultigroupMoments::total_e_face() const { return group_sum(e_face, ng, faces); }
std::vector<double> MultigroupMoments::total_f_face() const { return group_sum(f_face, ng, faces); }

BoundaryInflow BoundaryInflow::from_source(const SpatialMesh& mesh,
                                           const setup::AngularQuadrature& quadrature,
                                           const transport::BoundarySource& bc,
                                           const Constants& constants) {
  BoundaryInflow in;
  in.ng = bc.num_groups();
  in.per_group = 2 * static_cast<std::size_t>(mesh.nx() + mesh.ny());
  const auto g_count = static_cast<std::size_t>(in.ng);
  in.energy.assign(g_count * in.per_group, 0.0);
  in.flux.assign(g_count * in.per_group, 0.0);
  for (Side side : setup::kSides) {
    double w_in = 0.0;
    double mu_in = 0.0;
    for (const auto& d : quadrature.directions()) {
      double mu = 0.0;
      switch (side) {
        case Side::kLeft: mu = -d.ox; break;
        case Side::kRight: mu = d.ox; break;
        case Side::kBottom: mu = -d.oy; break;
        case Side::kTop: mu = d.oy; break;
      }
      if (mu < 0.0) {
        w_in += d.weight;
        mu_in += d.weight * mu;
      }
    }
    for (int g = 0; g < in.ng; ++g) {
      const double i_in = bc.incoming(side, g);
      for (int k = 0; k < mesh.side_length(side); ++k) {
        const std::size_t slot = static_cast<std::size_t>(g) * in.per_group + boundary_slot(mesh, side, k);
        in.energy[slot] = w_in * i_in / constants.c;
        in.flux[slot] = mu_in * i_in;
      }
    }
  }
  return in;
}

GroupMaterial group_material(const std::vector<double>& temperature,
                             const setup::FrequencyGrid& grid,
                             const setup::MaterialModel& material) {
  const std::size_t nc = temperature.size();
  const auto ng = static_cast<std::size_t>(grid.num_groups());
  GroupMaterial out;
  out.kappa.resize(ng * nc);
  out.planck.resize(ng * nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const std::vector<double> k = setup::opacity_groups(temperature[c], grid, material);
    const std::vector<double> b = setup::planck_groups(temperature[c], grid, material.constants);
    for (std::size_t g = 0; g < ng; ++g) {
      out.kappa[g * nc + c] = k[g];
      out.planck[g * nc + c] = b[g];
    }
  }
  return out;
}

// --- multigroup -------------------------------------------------------------

MultigroupMoments solve_multigroup_loqd(const SpatialMesh& mesh, const ClosureRecord& closure,
                                        const GroupMaterial& material,
                                        const MultigroupMoments& previous,
                                        const BoundaryInflow& inflow, double dt,
                                        const Constants& constants,
                                        const MultigroupOptions& options,
                                        MultigroupDiagnostics* diagnostics) {
  check_inputs(mesh, closure, material, previous, inflow, dt);
  const int ng = closure.ng;
  MultigroupMoments out = MultigroupMoments::zeros(mesh, ng);
  std::vector<double> residuals(static_cast<std::size_t>(ng), 0.0);
  const std::size_t nc = out.cells;
  const std::size_t nf = out.faces;

  detail::parallel_for(static_cast<std::size_t>(ng), options.threads, [&](std::size_t gu) {
    const int g = static_cast<int>(gu);
    const Coeffs q = group_coeffs(mesh, closure, material, previous, inflow, dt, constants, g);
    SparseMatrix a;
    Eigen::VectorXd b;
    assemble(mesh, q, constants.c, a, b);
    Eigen::SparseLU<SparseMatrix> lu;
    lu.compute(a);
    if (lu.info() != Eigen::Success)
      throw SolverError("multigroup LOQD matrix is singular in group " + std::to_string(g));
    Eigen::VectorXd x = lu.solve(b);
    double res = scaled_residual(a, x, b);
    // Opacities spanning many decades can leave the LU short of the
    // componentwise tolerance; a few refinement steps recover it.
    for (int refine = 0; refine < 3 && lu.info() == Eigen::Success && !(res <= options.residual_tol);
         ++refine) {
      x -= lu.solve(a * x - b);
      res = scaled_residual(a, x, b);
    }
    if (lu.info() != Eigen::Success || !(res <= options.residual_tol))
      throw SolverError("multigroup LOQD solve failed in group " + std::to_string(g) +
                            " (scaled residual " + sci(res) + ")",
                        {res});
    residuals[gu] = res;
    for (std::size_t c = 0; c < nc; ++c) out.ec(g, c) = x(static_cast<Eigen::Index>(c));
    for (std::size_t f = 0; f < nf; ++f) {
      out.ef(g, f) = x(static_cast<Eigen::Index>(nc + f));
      out.ff(g, f) = x(static_cast<Eigen::Index>(nc + nf + f));
    }
  });
  if (diagnostics)
    diagnostics->max_residual = *std::max_element(residuals.begin(), residuals.end());
  return out;
}

double multigroup_residual(const SpatialMesh& mesh, const ClosureRecord& closure,
                           const GroupMaterial& material, const MultigroupMoments& previous,
                           const BoundaryInflow& inflow, double dt, const Constants& constants,
                           const MultigroupMoments& solution, int g) {
  check_inputs(mesh, closure, material, previous, inflow, dt);
  const Coeffs q = group_coeffs(mesh, closure, material, previous, inflow, dt, constants, g);
  SparseMatrix a;
  Eigen::VectorXd b;
  assemble(mesh, q, constants.c, a, b);
  return scaled_residual(a, pack(solution, g), b);
}

// --- grey coefficients ------------------------------------------------------

SpectrumAveraged compute_grey_coefficients(const SpatialMesh& mesh, const MultigroupMoments& mg,
                                           const GroupMaterial& material,
                                           const ClosureRecord& closure,
                                           const MultigroupMoments& previous,
                                           const BoundaryInflow& inflow, double dt,
                                           const Constants& constants) {
  check_inputs(mesh, closure, material, previous, inflow, dt);
  const int ng = closure.ng;
  const auto gn = static_cast<std::size_t>(ng);
  const std::size_t nc = mesh.num_cells();
  const std::size_t nv = mesh.num_vfaces();
  const std::size_t nh = mesh.num_hfaces();
  const std::size_t nf = nv + nh;
  if (mg.ng != ng || mg.e_cell.size() != gn * nc || mg.e_face.size() != gn * nf)
    throw ShapeError("multigroup moments do not match the layout");

  const auto degenerate = [](const std::string& what, std::size_t where) {
    throw DegenerateError("non-positive denominator in " + what + " at index " + std::to_string(where));
  };

  SpectrumAveraged s;
  s.kappa_e.assign(nc, 0.0);
  s.kappa_b.assign(nc, 0.0);
  s.kappa_rx.assign(nc, 0.0);
  s.kappa_ry.assign(nc, 0.0);
  s.eta_x.assign(nc, 0.0);
  s.eta_y.assign(nc, 0.0);
  s.f_xx_c.assign(nc, 0.0);
  s.f_yy_c.assign(nc, 0.0);
  s.f_xx_v.assign(nv, 0.0);
  s.f_xy_v.assign(nv, 0.0);
  s.f_yy_h.assign(nh, 0.0);
  s.f_xy_h.assign(nh, 0.0);

  const std::vector<double> e_cell = mg.total_e_cell();
  const std::vector<double> e_face = mg.total_e_face();
  for (std::size_t c = 0; c < nc; ++c)
    if (!(e_cell[c] > 0.0)) degenerate("total cell energy density", c);
  for (std::size_t f = 0; f < nf; ++f)
    if (!(e_face[f] > 0.0)) degenerate("total face energy density", f);

  for (std::size_t c = 0; c < nc; ++c) {
    double ke = 0.0, kb = 0.0, bsum = 0.0, fxx = 0.0, fyy = 0.0;
    for (std::size_t g = 0; g < gn; ++g) {
      const double kap = material.kappa[g * nc + c];
      const double e = mg.e_cell[g * nc + c];
      ke += kap * e;
      kb += kap * material.planck[g * nc + c];
      bsum += material.planck[g * nc + c];
      fxx += closure.fxx_c[g * nc + c] * e;
      fyy += closure.fyy_c[g * nc + c] * e;
    }
    if (!(bsum > 0.0)) degenerate("kappa_B (Planck sum)", c);
    s.kappa_e[c] = ke / e_cell[c];
    s.kappa_b[c] = kb / bsum;
    s.f_xx_c[c] = fxx / e_cell[c];
    s.f_yy_c[c] = fyy / e_cell[c];
  }
  s.e_fraction.resize(gn * nc);
  for (std::size_t g = 0; g < gn; ++g)
    for (std::size_t c = 0; c < nc; ++c) s.e_fraction[g * nc + c] = mg.e_cell[g * nc + c] / e_cell[c];
  for (std::size_t f = 0; f < nv; ++f) {
    double a = 0.0, b = 0.0;
    for (std::size_t g = 0; g < gn; ++g) {
      a += closure.fxx_v[g * nv + f] * mg.e_face[g * nf + f];
      b += closure.fxy_v[g * nv + f] * mg.e_face[g * nf + f];
    }
    s.f_xx_v[f] = a / e_face[f];
    s.f_xy_v[f] = b / e_face[f];
  }
  for (std::size_t h = 0; h < nh; ++h) {
    double a = 0.0, b = 0.0;
    for (std::size_t g = 0; g < gn; ++g) {
      a += closure.fyy_h[g * nh + h] * mg.e_face[g * nf + nv + h];
      b += closure.fxy_h[g * nh + h] * mg.e_face[g * nf + nv + h];
    }
    s.f_yy_h[h] = a / e_face[nv + h];
    s.f_xy_h[h] = b / e_face[nv + h];
  }

  // Rosseland-type diagnostics from the cell-centred group flux.
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      double ax = 0.0, bx = 0.0, ay = 0.0, by = 0.0, kmean = 0.0;
      std::vector<double> fx(gn), fy(gn);
      for (std::size_t g = 0; g < gn; ++g) {
        const int gi = static_cast<int>(g);
        fx[g] = 0.5 * (mg.ff(gi, mesh.face_of_cell(i, j, Side::kLeft)) +
                       mg.ff(gi, mesh.face_of_cell(i, j, Side::kRight)));
        fy[g] = 0.5 * (mg.ff(gi, mesh.face_of_cell(i, j, Side::kBottom)) +
                       mg.ff(gi, mesh.face_of_cell(i, j, Side::kTop)));
        const double kap = material.kappa[g * nc + c];
        ax += kap * std::abs(fx[g]);
        bx += std::abs(fx[g]);
        ay += kap * std::abs(fy[g]);
        by += std::abs(fy[g]);
        kmean += kap / static_cast<double>(gn);
      }
      s.kappa_rx[c] = bx > 0.0 ? ax / bx : kmean;
      s.kappa_ry[c] = by > 0.0 ? ay / by : kmean;
      double ex = 0.0, ey = 0.0;
      for (std::size_t g = 0; g < gn; ++g) {
        const double kap = material.kappa[g * nc + c];
        ex += (kap - s.kappa_rx[c]) * fx[g];
        ey += (kap - s.kappa_ry[c]) * fy[g];
      }
      s.eta_x[c] = ex / e_cell[c];
      s.eta_y[c] = ey / e_cell[c];
    }
  }

  // Half-cell flux coefficients: each group row divided by its kappa-tilde, then summed.
  const double cdt = constants.c * dt;
  s.d_face.assign(4 * nc, 0.0);
  s.d_cell.assign(4 * nc, 0.0);
  s.x_hi.assign(4 * nc, 0.0);
  s.x_lo.assign(4 * nc, 0.0);
  s.p.assign(4 * nc, 0.0);
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      for (Side sd : setup::kSides) {
        const std::size_t h = half_cell(c, sd);
        const std::size_t f = mesh.face_of_cell(i, j, sd);
        std::size_t fhi = 0, flo = 0;
        cross_faces(mesh, i, j, sd, fhi, flo);
        double df = 0.0, dc = 0.0, xh = 0.0, xl = 0.0, p = 0.0;
        for (std::size_t g = 0; g < gn; ++g) {
          const int gi = static_cast<int>(g);
          const double kap = material.kappa[g * nc + c];
          const double inv_kt = cdt / (1.0 + cdt * kap);  // 1 / (kappa + 1/(c dt))
          if (is_vertical(sd)) {
            df += inv_kt * closure.fxx_v[g * nv + f] * mg.ef(gi, f);
            dc += inv_kt * closure.fxx_c[g * nc + c] * mg.ec(gi, c);
            xh += inv_kt * closure.fxy_h[g * nh + (fhi - nv)] * mg.ef(gi, fhi);
            xl += inv_kt * closure.fxy_h[g * nh + (flo - nv)] * mg.ef(gi, flo);
          } else {
            df += inv_kt * closure.fyy_h[g * nh + (f - nv)] * mg.ef(gi, f);
            dc += inv_kt * closure.fyy_c[g * nc + c] * mg.ec(gi, c);
            xh += inv_kt * closure.fxy_v[g * nv + fhi] * mg.ef(gi, fhi);
            xl += inv_kt * closure.fxy_v[g * nv + flo] * mg.ef(gi, flo);
          }
          p += previous.ff(gi, f) / (1.0 + cdt * kap);
        }
        s.d_face[h] = df / e_face[f];
        s.d_cell[h] = dc / e_cell[c];
        s.x_hi[h] = xh / e_face[fhi];
        s.x_lo[h] = xl / e_face[flo];
        s.p[h] = p;
      }
    }
  }

  const std::size_t slots = 2 * static_cast<std::size_t>(mesh.nx() + mesh.ny());
  s.c_bar.assign(slots, 0.0);
  s.e_in.assign(slots, 0.0);
  s.f_in.assign(slots, 0.0);
  for (Side sd : setup::kSides) {
    for (int k = 0; k < mesh.side_length(sd); ++k) {
      const std::size_t slot = boundary_slot(mesh, sd, k);
      const std::size_t f = mesh.boundary_face(sd, k);
      double num = 0.0, den = 0.0, mean = 0.0;
      for (std::size_t g = 0; g < gn; ++g) {
        const int gi = static_cast<int>(g);
        const double cg = closure.boundary[g * slots + slot];
        const double diff = mg.ef(gi, f) - inflow.e(gi, slot);
        num += cg * diff;
        den += diff;
        mean += cg / static_cast<double>(gn);
        s.e_in[slot] += inflow.e(gi, slot);
        s.f_in[slot] += inflow.f(gi, slot);
      }
      if (std::abs(den) < 1e-30 * e_face[f]) {
        s.c_bar[slot] = mean;
        ++s.c_bar_fallbacks;
      } else {
        s.c_bar[slot] = num / den;
      }
    }
  }
  return s;
}

// --- grey problem -----------------------------------------------------------

MebSolution solve_meb(double e, double t_old, double kappa_e, double kappa_b, double dt,
                      double heat_capacity, const Constants& constants) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  if (kappa_e == 0.0 && kappa_b == 0.0) return {t_old, 0.0};
  const double rhs = heat_capacity * t_old / dt + constants.c * kappa_e * e;
  if (!(rhs > 0.0))
    throw SolverError("material energy balance has no positive temperature (E = " +
                      std::to_string(e) + ")");
  const double a4 = constants.c * kappa_b * constants.a_r;
  const double lin = heat_capacity / dt;
  double t = rhs / lin;
  if (a4 > 0.0) {
    t = std::min(t, std::sqrt(std::sqrt(rhs / a4)));
    // f(T) = lin T + a4 T^4 - rhs is convex and increasing for T > 0, so
    // Newton from an upper bound decreases monotonically onto the root.
    for (int it = 0; it < 200; ++it) {
      const double t3 = t * t * t;
      const double f = lin * t + a4 * t3 * t - rhs;
      const double step = f / (lin + 4.0 * a4 * t3);
      t -= step;
      if (std::abs(step) <= 4e-16 * t) break;
    }
  }
  const double dtde = constants.c * kappa_e / (lin + 4.0 * a4 * t * t * t);
  return {t, dtde};
}

MebSolution solve_meb_spectral(double e, double t_old, const std::vector<double>& e_fraction,
                               double dt, double heat_capacity, const setup::FrequencyGrid& grid,
                               const setup::MaterialModel& material, double t_guess) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const auto ng = static_cast<std::size_t>(grid.num_groups());
  if (e_fraction.size() != ng) throw ShapeError("one spectral fraction per group is required");
  const Constants& k = material.constants;
  const double lin = heat_capacity / dt;
  struct Eval {
    double f = 0.0;
    double scale = 0.0;
    double kappa_e = 0.0;  // sum_g kappa_g(T) w_g
  };
  const auto balance = [&](double t) {
    const std::vector<double> kap = setup::opacity_groups(t, grid, material);
    const std::vector<double> b = setup::planck_groups(t, grid, k);
    Eval r;
    double emit = 0.0;
    for (std::size_t g = 0; g < ng; ++g) {
      r.kappa_e += kap[g] * e_fraction[g];
      emit += kap[g] * b[g];
    }
    const double absorb = k.c * r.kappa_e * e;
    r.f = lin * (t - t_old) - absorb + kFourPi * emit;
    r.scale = lin * (std::abs(t) + std::abs(t_old)) + std::abs(absorb) + kFourPi * emit;
    return r;
  };

  // Safeguarded Newton with a forward-difference slope; [lo, hi] brackets the
  // root once both signs have been seen.
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  double t = std::max(t_guess > 0.0 ? t_guess : t_old, setup::kMinTemperature);
  double slope = 0.0;
  Eval ev;
  for (int it = 0; it < 100; ++it) {
    ev = balance(t);
    const double h = 1e-6 * t;
    slope = (balance(t + h).f - ev.f) / h;
    if (std::abs(ev.f) <= 1e-15 * ev.scale) {
      MebSolution out;
      out.temperature = t;
      out.dtde = slope > 0.0 ? k.c * ev.kappa_e / slope : 0.0;
      return out;
    }
    (ev.f < 0.0 ? lo : hi) = t;
    double next = slope > 0.0 ? t - ev.f / slope : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) {
      if (std::isfinite(hi) && lo > 0.0)
        next = 0.5 * (lo + hi);
      else
        next = ev.f < 0.0 ? 2.0 * t : 0.5 * t;
    }
    if (next < setup::kMinTemperature)
      throw SolverError("material energy balance has no positive root (E = " + std::to_string(e) +
                        ")");
    if (std::abs(next - t) <= 1e-15 * t) {
      MebSolution out;
      out.temperature = next;
      out.dtde = slope > 0.0 ? k.c * ev.kappa_e / slope : 0.0;
      return out;
    }
    t = next;
  }
  throw SolverError("material energy balance Newton iteration did not converge");
}

namespace {

Coeffs grey_linear_coeffs(const SpatialMesh& mesh, const SpectrumAveraged& s,
                          const std::vector<double>& e_cell_old, double dt,
                          const Constants& constants) {
  const Geometry geo = geometry(mesh);
  Coeffs q;
  q.resize(geo.cells, geo.slots);
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      const double area = mesh.cell_area(i, j);
      q.cell_diag[c] = area / dt;
      q.cell_rhs[c] = area * e_cell_old[c] / dt;
      for (Side sd : setup::kSides) {
        const std::size_t h = half_cell(c, sd);
        const double half_area = mesh.half_cell_area(i, j);
        q.a_t[h] = half_area;
        q.hc_rhs[h] = half_area * s.p[h];
        q.d_face[h] = s.d_face[h];
        q.d_cell[h] = s.d_cell[h];
        q.x_hi[h] = s.x_hi[h];
        q.x_lo[h] = s.x_lo[h];
      }
    }
  }
  for (std::size_t slot = 0; slot < geo.slots; ++slot) {
    q.bc_c[slot] = s.c_bar[slot];
    q.bc_rhs[slot] = -constants.c * s.c_bar[slot] * s.e_in[slot] + s.f_in[slot];
  }
  return q;
}

void check_grey(const SpatialMesh& mesh, const SpectrumAveraged& s, const GreyState& st,
                const char* what) {
  const std::size_t nc = mesh.num_cells();
  const std::size_t nf = mesh.num_faces();
  if (s.kappa_e.size() != nc || s.d_face.size() != 4 * nc ||
      s.c_bar.size() != 2 * static_cast<std::size_t>(mesh.nx() + mesh.ny()))
    throw ShapeError("grey coefficients do not match the mesh");
  if (st.e_cell.size() != nc || st.e_face.size() != nf || st.f_face.size() != nf ||
      st.temperature.size() != nc)
    throw ShapeError(std::string(what) + " grey state does not match the mesh");
}

}  // namespace

GreyState solve_grey_problem(const SpatialMesh& mesh, const SpectrumAveraged& coeffs,
                             const GreyState& previous, const GreyState& guess, double dt,
                             double heat_capacity, const Constants& constants,
                             const GreyOptions& options, GreyDiagnostics* diagnostics) {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  check_grey(mesh, coeffs, previous, "previous");
  const std::size_t nc = mesh.num_cells();
  const std::size_t nf = mesh.num_faces();
  if (guess.e_cell.size() != nc || guess.e_face.size() != nf || guess.f_face.size() != nf)
    throw ShapeError("initial guess does not match the mesh");

  const Coeffs q = grey_linear_coeffs(mesh, coeffs, previous.e_cell, dt, constants);
  SparseMatrix lin;
  Eigen::VectorXd b;
  assemble(mesh, q, constants.c, lin, b);
  const auto n = static_cast<Eigen::Index>(nc + 2 * nf);

  Eigen::VectorXd x(n);
  for (std::size_t c = 0; c < nc; ++c) x(static_cast<Eigen::Index>(c)) = guess.e_cell[c];
  for (std::size_t f = 0; f < nf; ++f) {
    x(static_cast<Eigen::Index>(nc + f)) = guess.e_face[f];
    x(static_cast<Eigen::Index>(nc + nf + f)) = guess.f_face[f];
  }

  std::vector<double> area(nc);
  for (int j = 0; j < mesh.ny(); ++j)
    for (int i = 0; i < mesh.nx(); ++i) area[mesh.cell(i, j)] = mesh.cell_area(i, j);

  std::vector<MebSolution> meb(nc);
  Eigen::VectorXd nonlin = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd nonlin_scale = Eigen::VectorXd::Zero(n);
  const bool spectral = options.grid != nullptr && options.material != nullptr;
  const std::size_t ng = spectral ? static_cast<std::size_t>(options.grid->num_groups()) : 0;
  if (spectral && coeffs.e_fraction.size() != ng * nc)
    throw ShapeError("spectral fractions do not match groups x cells");
  std::vector<double> fraction(ng);
  for (std::size_t c = 0; c < nc; ++c)
    meb[c].temperature = guess.temperature.size() == nc ? guess.temperature[c] : previous.temperature[c];
  const auto evaluate = [&](const Eigen::VectorXd& state) {
    for (std::size_t c = 0; c < nc; ++c) {
      if (spectral) {
        for (std::size_t g = 0; g < ng; ++g) fraction[g] = coeffs.e_fraction[g * nc + c];
        meb[c] = solve_meb_spectral(state(static_cast<Eigen::Index>(c)), previous.temperature[c],
                                    fraction, dt, heat_capacity, *options.grid, *options.material,
                                    meb[c].temperature);
      } else {
        meb[c] = solve_meb(state(static_cast<Eigen::Index>(c)), previous.temperature[c],
                           coeffs.kappa_e[c], coeffs.kappa_b[c], dt, heat_capacity, constants);
      }
      const double k = area[c] * heat_capacity / dt;
      nonlin(static_cast<Eigen::Index>(c)) = k * (meb[c].temperature - previous.temperature[c]);
      nonlin_scale(static_cast<Eigen::Index>(c)) =
          k * (std::abs(meb[c].temperature) + std::abs(previous.temperature[c]));
    }
    return scaled_residual(lin, state, b, &nonlin, &nonlin_scale);
  };

  std::vector<double> history;
  double res = evaluate(x);
  history.push_back(res);
  Eigen::SparseLU<SparseMatrix> lu;
  bool analyzed = false;
  int it = 0;
  while (res > options.tol) {
    if (it >= options.max_iterations)
      throw SolverError("grey Newton did not converge in " + std::to_string(it) + " iterations",
                        history);
    SparseMatrix jac = lin;
    for (std::size_t c = 0; c < nc; ++c) {
      const auto k = static_cast<Eigen::Index>(c);
      jac.coeffRef(k, k) += area[c] * heat_capacity / dt * meb[c].dtde;
    }
    if (!analyzed) {
      lu.analyzePattern(jac);
      analyzed = true;
    }
    lu.factorize(jac);
    if (lu.info() != Eigen::Success) throw SolverError("grey Newton Jacobian is singular", history);
    const Eigen::VectorXd r = lin * x - b + nonlin;
    const Eigen::VectorXd dx = lu.solve(-r);

    // Halve the step while the material balance has no positive root.
    double lambda = 1.0;
    Eigen::VectorXd trial;
    for (int cut = 0;; ++cut) {
      trial = x + lambda * dx;
      try {
        res = evaluate(trial);
        break;
      } catch (const SolverError&) {
        if (cut >= 40) throw SolverError("grey Newton step could not be damped", history);
        lambda *= 0.5;
      }
    }
    x = trial;
    history.push_back(res);
    ++it;
  }

  GreyState out;
  out.e_cell.resize(nc);
  out.e_face.resize(nf);
  out.f_face.resize(nf);
  out.temperature.resize(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    out.e_cell[c] = x(static_cast<Eigen::Index>(c));
    out.temperature[c] = meb[c].temperature;
  }
  for (std::size_t f = 0; f < nf; ++f) {
    out.e_face[f] = x(static_cast<Eigen::Index>(nc + f));
    out.f_face[f] = x(static_cast<Eigen::Index>(nc + nf + f));
  }
  if (diagnostics) {
    diagnostics->iterations = it;
    diagnostics->history = std::move(history);
  }
  return out;
}

double grey_residual(const SpatialMesh& mesh, const SpectrumAveraged& coeffs,
                     const std::vector<double>& e_cell_old, const GreyState& state, double dt,
                     const Constants& constants) {
  check_grey(mesh, coeffs, state, "evaluated");
  const std::size_t nc = mesh.num_cells();
  const std::size_t nf = mesh.num_faces();
  const Coeffs q = grey_linear_coeffs(mesh, coeffs, e_cell_old, dt, constants);
  SparseMatrix lin;
  Eigen::VectorXd b;
  assemble(mesh, q, constants.c, lin, b);
  const auto n = static_cast<Eigen::Index>(nc + 2 * nf);
  Eigen::VectorXd x(n), extra = Eigen::VectorXd::Zero(n), scale = Eigen::VectorXd::Zero(n);
  for (std::size_t f = 0; f < nf; ++f) {
    x(static_cast<Eigen::Index>(nc + f)) = state.e_face[f];
    x(static_cast<Eigen::Index>(nc + nf + f)) = state.f_face[f];
  }
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      const auto k = static_cast<Eigen::Index>(c);
      const double area = mesh.cell_area(i, j);
      const double t = state.temperature[c];
      x(k) = state.e_cell[c];
      const double absorb = constants.c * coeffs.kappa_e[c] * area * state.e_cell[c];
      const double emit = constants.c * coeffs.kappa_b[c] * area * constants.a_r * t * t * t * t;
      extra(k) = absorb - emit;
      scale(k) = std::abs(absorb) + std::abs(emit);
    }
  }
  return scaled_residual(lin, x, b, &extra, &scale);
}

double meb_residual(const SpectrumAveraged& coeffs, const GreyState& previous,
                    const GreyState& state, double dt, double heat_capacity,
                    const Constants& constants) {
  double worst = 0.0;
  for (std::size_t c = 0; c < state.temperature.size(); ++c) {
    const double t = state.temperature[c];
    const double terms[4] = {heat_capacity * t / dt, -heat_capacity * previous.temperature[c] / dt,
                             -constants.c * coeffs.kappa_e[c] * state.e_cell[c],
                             constants.c * coeffs.kappa_b[c] * constants.a_r * t * t * t * t};
    double r = 0.0, s = 0.0;
    for (double v : terms) {
      r += v;
      s += std::abs(v);
    }
    worst = std::max(worst, s > 0.0 ? std::abs(r) / s : std::abs(r));
  }
  return worst;
}

}  // namespace ddet::loqd
