#include "ddet/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <Eigen/Dense>

#include "ddet/errors.hpp"
#include "parallel.hpp"

namespace ddet::transport {

// --- IntensityField -----------------------------------------------------------

IntensityField::IntensityField(int num_groups, std::size_t num_directions, std::size_t num_cells,
                               double value)
    : groups_(num_groups),
      directions_(num_directions),
      cells_(num_cells),
      data_(static_cast<std::size_t>(num_groups) * num_directions * num_cells * kCorners, value) {
  if (num_groups < 1 || num_directions < 1 || num_cells < 1)
    throw ShapeError("intensity field needs at least one group, direction and cell");
}

double IntensityField::cell_value(int g, std::size_t m, std::size_t cell) const {
  const double* p = data_.data() + index(g, m, cell, 0);
  return 0.25 * (p[0] + p[1] + p[2] + p[3]);
}

// --- BoundarySource -----------------------------------------------------------

BoundarySource BoundarySource::vacuum(int num_groups) {
  BoundarySource bc;
  for (auto& side : bc.intensity) side.assign(static_cast<std::size_t>(num_groups), 0.0);
  return bc;
}

BoundarySource BoundarySource::blackbody(const std::array<bool, 4>& hot, double temperature,
                                         const FrequencyGrid& grid,
                                         const setup::Constants& constants) {
  BoundarySource bc = vacuum(grid.num_groups());
  const std::vector<double> b = setup::planck_groups(temperature, grid, constants);
  for (std::size_t s = 0; s < 4; ++s)
    if (hot[s]) bc.intensity[s] = b;
  return bc;
}

// --- ClosureRecord ------------------------------------------------------------

ClosureRecord ClosureRecord::zeros(int nx, int ny, int ng) {
  if (nx < 1 || ny < 1 || ng < 1) throw ShapeError("closure record needs positive sizes");
  ClosureRecord r;
  r.nx = nx;
  r.ny = ny;
  r.ng = ng;
  const auto g = static_cast<std::size_t>(ng);
  r.fxx_c.assign(g * r.num_cells(), 0.0);
  r.fyy_c.assign(g * r.num_cells(), 0.0);
  r.fxx_v.assign(g * r.num_vfaces(), 0.0);
  r.fxy_v.assign(g * r.num_vfaces(), 0.0);
  r.fyy_h.assign(g * r.num_hfaces(), 0.0);
  r.fxy_h.assign(g * r.num_hfaces(), 0.0);
  r.boundary.assign(g * r.boundary_per_group(), 0.0);
  return r;
}

ClosureRecord ClosureRecord::isotropic(int nx, int ny, int ng) {
  ClosureRecord r = zeros(nx, ny, ng);
  for (auto* v : {&r.fxx_c, &r.fyy_c, &r.fxx_v, &r.fyy_h}) std::fill(v->begin(), v->end(), 1.0 / 3.0);
  std::fill(r.boundary.begin(), r.boundary.end(), 0.5);
  return r;
}

std::size_t ClosureRecord::side_offset(Side side) const {
  const auto x = static_cast<std::size_t>(nx);
  const auto y = static_cast<std::size_t>(ny);
  switch (side) {
    case Side::kLeft: return 0;
    case Side::kBottom: return y;
    case Side::kRight: return y + x;
    case Side::kTop: return 2 * y + x;
  }
  return 0;
}

std::size_t ClosureRecord::tensor_dof_count(int nx, int ny, int ng) {
  const auto c = static_cast<std::size_t>(nx) * ny;
  const auto v = static_cast<std::size_t>(nx + 1) * ny;
  const auto h = static_cast<std::size_t>(nx) * (ny + 1);
  return 2 * (v + h + c) * static_cast<std::size_t>(ng);
}

void ClosureRecord::require_shape(int nx_expected, int ny_expected, int ng_expected) const {
  if (nx != nx_expected || ny != ny_expected || ng != ng_expected)
    throw ShapeError("closure record is " + std::to_string(nx) + "x" + std::to_string(ny) + "x" +
                     std::to_string(ng) + ", expected " + std::to_string(nx_expected) + "x" +
                     std::to_string(ny_expected) + "x" + std::to_string(ng_expected));
  const auto g = static_cast<std::size_t>(ng);
  const bool sizes_ok = fxx_c.size() == g * num_cells() && fyy_c.size() == g * num_cells() &&
                        fxx_v.size() == g * num_vfaces() && fxy_v.size() == g * num_vfaces() &&
                        fyy_h.size() == g * num_hfaces() && fxy_h.size() == g * num_hfaces() &&
                        boundary.size() == g * boundary_per_group();
  if (!sizes_ok) throw ShapeError("closure record arrays do not match its declared layout");
  for (const auto* v : {&fxx_c, &fyy_c, &fxx_v, &fxy_v, &fyy_h, &fxy_h, &boundary})
    for (double x : *v)
      if (!std::isfinite(x)) throw DataError("closure record contains non-finite values");
}

ClosureBounds check_closure_bounds(const ClosureRecord& closure) {
  ClosureBounds b;
  for (const auto* v : {&closure.fxx_c, &closure.fyy_c, &closure.fxx_v, &closure.fyy_h})
    for (double x : *v)
      if (x < 0.0 || x > 1.0) ++b.diagonal_out_of_range;
  for (double x : closure.boundary)
    if (!(x > 0.0 && x < 1.0)) ++b.boundary_out_of_range;
  return b;
}

// --- TransportSolver ----------------------------------------------------------

TransportSolver::TransportSolver(SpatialMesh mesh, AngularQuadrature quadrature,
                                 FrequencyGrid grid, MaterialModel material, int threads)
    : mesh_(std::move(mesh)),
      quad_(std::move(quadrature)),
      grid_(std::move(grid)),
      material_(material) {
  set_threads(threads);
}

void TransportSolver::set_threads(int threads) {
  if (threads < 1) throw ConfigError("thread count must be at least 1");
  threads_ = threads;
}

IntensityField TransportSolver::make_field(double value) const {
  return IntensityField(grid_.num_groups(), quad_.size(), mesh_.num_cells(), value);
}

IntensityField TransportSolver::equilibrium_field(double temperature) const {
  IntensityField field = make_field();
  const std::vector<double> b = setup::planck_groups(temperature, grid_, material_.constants);
  for (int g = 0; g < grid_.num_groups(); ++g)
    for (std::size_t m = 0; m < quad_.size(); ++m) {
      auto blk = field.block(g, m);
      std::fill(blk.begin(), blk.end(), b[static_cast<std::size_t>(g)]);
    }
  return field;
}

std::vector<double> TransportSolver::opacities(const std::vector<double>& temperature) const {
  const std::size_t nc = mesh_.num_cells();
  if (temperature.size() != nc) throw ShapeError("temperature field does not match the mesh");
  std::vector<double> out(static_cast<std::size_t>(grid_.num_groups()) * nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const std::vector<double> k = setup::opacity_groups(temperature[c], grid_, material_);
    for (std::size_t g = 0; g < k.size(); ++g) out[g * nc + c] = k[g];
  }
  return out;
}

std::vector<double> TransportSolver::planck(const std::vector<double>& temperature) const {
  const std::size_t nc = mesh_.num_cells();
  if (temperature.size() != nc) throw ShapeError("temperature field does not match the mesh");
  std::vector<double> out(static_cast<std::size_t>(grid_.num_groups()) * nc);
  for (std::size_t c = 0; c < nc; ++c) {
    const std::vector<double> b = setup::planck_groups(temperature[c], grid_, material_.constants);
    for (std::size_t g = 0; g < b.size(); ++g) out[g * nc + c] = b[g];
  }
  return out;
}

IntensityField TransportSolver::sweep(const std::vector<double>& temperature,
                                      const IntensityField& previous, double dt,
                                      const BoundarySource& bc, SweepStats* stats) const {
  for (double t : temperature) setup::require_temperature(t);
  return sweep_sources(opacities(temperature), planck(temperature), previous, dt, bc, stats);
}

IntensityField TransportSolver::sweep_sources(const std::vector<double>& kappa,
                                              const std::vector<double>& planck,
                                              const IntensityField& previous, double dt,
                                              const BoundarySource& bc, SweepStats* stats) const {
  if (!(dt > 0.0)) throw DomainError("time step must be positive");
  const std::size_t nc = mesh_.num_cells();
  const int ng = grid_.num_groups();
  const std::size_t nd = quad_.size();
  const std::size_t expected = static_cast<std::size_t>(ng) * nc;
  if (kappa.size() != expected || planck.size() != expected)
    throw ShapeError("opacity / source arrays do not match groups x cells");
  if (previous.num_groups() != ng || previous.num_directions() != nd ||
      previous.num_cells() != nc)
    throw ShapeError("previous intensity does not match mesh / quadrature / groups");
  if (bc.num_groups() != ng) throw ShapeError("boundary source group count mismatch");

  IntensityField out = make_field();
  const std::size_t pairs = static_cast<std::size_t>(ng) * nd;
  detail::parallel_for(pairs, threads_, [&](std::size_t k) {
    const int g = static_cast<int>(k / nd);
    const std::size_t m = k % nd;
    const std::size_t off = static_cast<std::size_t>(g) * nc;
    sweep_one(g, m, kappa.data() + off, planck.data() + off, previous, dt, bc, out);
  });

  if (stats) {
    stats->negative_count = 0;
    stats->min_value = out.data().empty() ? 0.0 : out.data().front();
    for (double v : out.data()) {
      if (v < 0.0) ++stats->negative_count;
      stats->min_value = std::min(stats->min_value, v);
    }
  }
  return out;
}

void TransportSolver::sweep_one(int g, std::size_t m, const double* kappa, const double* source_b,
                                const IntensityField& previous, double dt,
                                const BoundarySource& bc, IntensityField& out) const {
  const auto& dir = quad_[m];
  const double ox = dir.ox;
  const double oy = dir.oy;
  const double inv_cdt = 1.0 / (material_.constants.c * dt);
  const int nx = mesh_.nx();
  const int ny = mesh_.ny();
  const double in_left = bc.incoming(Side::kLeft, g);
  const double in_right = bc.incoming(Side::kRight, g);
  const double in_bottom = bc.incoming(Side::kBottom, g);
  const double in_top = bc.incoming(Side::kTop, g);

  std::span<double> psi = out.block(g, m);
  std::span<const double> prev = previous.block(g, m);

  const auto solve_cell = [&](int i, int j) {
    const std::size_t c = mesh_.cell(i, j);
    const double hx = 0.5 * mesh_.dx(i);
    const double hy = 0.5 * mesh_.dy(j);
    const double area = hx * hy;
    const double sigma = kappa[c] + inv_cdt;
    Eigen::Matrix4d a = Eigen::Matrix4d::Zero();
    Eigen::Vector4d b;
    for (int k = 0; k < kCorners; ++k) {
      const int ix = k & 1;
      const int iy = k >> 1;
      a(k, k) += sigma * area;
      b(k) = area * (kappa[c] * source_b[c] + prev[c * kCorners + static_cast<std::size_t>(k)] * inv_cdt);

      // Outer half-face on the x side of the corner.
      const double nxo = ix == 0 ? -1.0 : 1.0;
      const double mux = ox * nxo * hy;
      if (mux > 0.0) {
        a(k, k) += mux;
      } else {
        const int ni = i + (ix == 0 ? -1 : 1);
        const double upwind = (ni < 0)    ? in_left
                              : (ni >= nx) ? in_right
                                           : psi[mesh_.cell(ni, j) * kCorners +
                                                 static_cast<std::size_t>((1 - ix) + 2 * iy)];
        b(k) -= mux * upwind;
      }
      // Interior line shared with the x-sibling, averaged.
      const double mxi = -0.5 * mux;
      a(k, k) += mxi;
      a(k, (1 - ix) + 2 * iy) += mxi;

      const double nyo = iy == 0 ? -1.0 : 1.0;
      const double muy = oy * nyo * hx;
      if (muy > 0.0) {
        a(k, k) += muy;
      } else {
        const int nj = j + (iy == 0 ? -1 : 1);
        const double upwind = (nj < 0)    ? in_bottom
                              : (nj >= ny) ? in_top
                                           : psi[mesh_.cell(i, nj) * kCorners +
                                                 static_cast<std::size_t>(ix + 2 * (1 - iy))];
        b(k) -= muy * upwind;
      }
      const double myi = -0.5 * muy;
      a(k, k) += myi;
      a(k, ix + 2 * (1 - iy)) += myi;
    }
    const Eigen::Vector4d x = a.partialPivLu().solve(b);
    for (int k = 0; k < kCorners; ++k) psi[c * kCorners + static_cast<std::size_t>(k)] = x(k);
  };

  const auto map_i = [&](int ii) { return ox > 0.0 ? ii : nx - 1 - ii; };
  const auto map_j = [&](int jj) { return oy > 0.0 ? jj : ny - 1 - jj; };
  if (order_ == SweepOrder::kRowMajor) {
    for (int jj = 0; jj < ny; ++jj)
      for (int ii = 0; ii < nx; ++ii) solve_cell(map_i(ii), map_j(jj));
  } else {
    for (int d = 0; d <= nx + ny - 2; ++d) {
      const int jlo = std::max(0, d - nx + 1);
      const int jhi = std::min(d, ny - 1);
      for (int jj = jlo; jj <= jhi; ++jj) solve_cell(map_i(d - jj), map_j(jj));
    }
  }
}

double TransportSolver::face_trace(const IntensityField& field, const BoundarySource& bc, int g,
                                   std::size_t m, std::size_t face) const {
  const auto& dir = quad_[m];
  const int nx = mesh_.nx();
  const int ny = mesh_.ny();
  std::span<const double> psi = field.block(g, m);
  const auto mean = [&](std::size_t c, int k0, int k1) {
    return 0.5 * (psi[c * kCorners + static_cast<std::size_t>(k0)] +
                  psi[c * kCorners + static_cast<std::size_t>(k1)]);
  };
  if (face < mesh_.num_vfaces()) {
    const int i = static_cast<int>(face % static_cast<std::size_t>(nx + 1));
    const int j = static_cast<int>(face / static_cast<std::size_t>(nx + 1));
    if (dir.ox > 0.0)
      return i == 0 ? bc.incoming(Side::kLeft, g) : mean(mesh_.cell(i - 1, j), 1, 3);
    return i == nx ? bc.incoming(Side::kRight, g) : mean(mesh_.cell(i, j), 0, 2);
  }
  const std::size_t h = face - mesh_.num_vfaces();
  const int i = static_cast<int>(h % static_cast<std::size_t>(nx));
  const int j = static_cast<int>(h / static_cast<std::size_t>(nx));
  if (dir.oy > 0.0)
    return j == 0 ? bc.incoming(Side::kBottom, g) : mean(mesh_.cell(i, j - 1), 2, 3);
  return j == ny ? bc.incoming(Side::kTop, g) : mean(mesh_.cell(i, j), 0, 1);
}

namespace {

[[noreturn]] void degenerate(const char* where, int g, std::size_t index) {
  throw DegenerateError(std::string("non-positive angular integral of intensity at ") + where +
                        " " + std::to_string(index) + ", group " + std::to_string(g));
}

}  // namespace

ClosureRecord TransportSolver::compute_eddington(const IntensityField& field,
                                                 const BoundarySource& bc,
                                                 std::size_t* fallbacks) const {
  const int ng = grid_.num_groups();
  const std::size_t nc = mesh_.num_cells();
  const std::size_t nv = mesh_.num_vfaces();
  const std::size_t nh = mesh_.num_hfaces();
  const std::size_t nd = quad_.size();
  if (field.num_groups() != ng || field.num_directions() != nd || field.num_cells() != nc)
    throw ShapeError("intensity field does not match mesh / quadrature / groups");
  ClosureRecord rec = ClosureRecord::zeros(mesh_.nx(), mesh_.ny(), ng);
  double w0 = 0.0, wxx = 0.0, wyy = 0.0, wxy = 0.0;
  for (const auto& d : quad_.directions()) {
    w0 += d.weight;
    wxx += d.weight * d.ox * d.ox;
    wyy += d.weight * d.oy * d.oy;
    wxy += d.weight * d.ox * d.oy;
  }
  std::vector<std::size_t> used(static_cast<std::size_t>(ng), 0);
  const auto empty = [&](double den) {
    return empty_fallback_ && den >= 0.0 && den < std::numeric_limits<double>::min();
  };

  detail::parallel_for(static_cast<std::size_t>(ng), threads_, [&](std::size_t gu) {
    const int g = static_cast<int>(gu);
    std::vector<double> s0(nc, 0.0), sxx(nc, 0.0), syy(nc, 0.0);
    for (std::size_t m = 0; m < nd; ++m) {
      const auto& d = quad_[m];
      for (std::size_t c = 0; c < nc; ++c) {
        const double wi = d.weight * field.cell_value(g, m, c);
        s0[c] += wi;
        sxx[c] += wi * d.ox * d.ox;
        syy[c] += wi * d.oy * d.oy;
      }
    }
    for (std::size_t c = 0; c < nc; ++c) {
      if (empty(s0[c])) {
        s0[c] = w0;
        sxx[c] = wxx;
        syy[c] = wyy;
        ++used[gu];
      }
      if (!(s0[c] > 0.0)) degenerate("cell", g, c);
      rec.fxx_c[gu * nc + c] = sxx[c] / s0[c];
      rec.fyy_c[gu * nc + c] = syy[c] / s0[c];
    }

    std::vector<double> f0(nv + nh, 0.0), fnn(nv + nh, 0.0), fxy(nv + nh, 0.0);
    for (std::size_t m = 0; m < nd; ++m) {
      const auto& d = quad_[m];
      for (std::size_t f = 0; f < nv + nh; ++f) {
        const double wi = d.weight * face_trace(field, bc, g, m, f);
        const double on = f < nv ? d.ox : d.oy;
        f0[f] += wi;
        fnn[f] += wi * on * on;
        fxy[f] += wi * d.ox * d.oy;
      }
    }
    for (std::size_t f = 0; f < nv + nh; ++f) {
      if (empty(f0[f])) {
        f0[f] = w0;
        fnn[f] = f < nv ? wxx : wyy;
        fxy[f] = wxy;
        ++used[gu];
      }
      if (!(f0[f] > 0.0)) degenerate("face", g, f);
      if (f < nv) {
        rec.fxx_v[gu * nv + f] = fnn[f] / f0[f];
        rec.fxy_v[gu * nv + f] = fxy[f] / f0[f];
      } else {
        rec.fyy_h[gu * nh + (f - nv)] = fnn[f] / f0[f];
        rec.fxy_h[gu * nh + (f - nv)] = fxy[f] / f0[f];
      }
    }
  });
  if (fallbacks) *fallbacks = std::accumulate(used.begin(), used.end(), std::size_t{0});
  return rec;
}

namespace {

double outward_component(const setup::Direction& d, Side side) {
  switch (side) {
    case Side::kLeft: return -d.ox;
    case Side::kRight: return d.ox;
    case Side::kBottom: return -d.oy;
    case Side::kTop: return d.oy;
  }
  return 0.0;
}

}  // namespace

void TransportSolver::compute_boundary_factors(const IntensityField& field,
                                               ClosureRecord& closure,
                                               std::size_t* fallbacks) const {
  const int ng = grid_.num_groups();
  closure.require_shape(mesh_.nx(), mesh_.ny(), ng);
  if (field.num_groups() != ng || field.num_directions() != quad_.size() ||
      field.num_cells() != mesh_.num_cells())
    throw ShapeError("intensity field does not match mesh / quadrature / groups");
  // Outgoing traces never touch the boundary source.
  const BoundarySource none = BoundarySource::vacuum(ng);
  std::array<double, 4> c_iso{};
  for (Side side : setup::kSides) {
    double num = 0.0, den = 0.0;
    for (const auto& d : quad_.directions()) {
      const double mu = outward_component(d, side);
      if (mu <= 0.0) continue;
      num += d.weight * mu;
      den += d.weight;
    }
    c_iso[static_cast<std::size_t>(side)] = num / den;
  }
  std::vector<std::size_t> used(static_cast<std::size_t>(ng), 0);
  detail::parallel_for(static_cast<std::size_t>(ng), threads_, [&](std::size_t gu) {
    const int g = static_cast<int>(gu);
    for (Side side : setup::kSides) {
      for (int k = 0; k < mesh_.side_length(side); ++k) {
        const std::size_t f = mesh_.boundary_face(side, k);
        double num = 0.0;
        double den = 0.0;
        for (std::size_t m = 0; m < quad_.size(); ++m) {
          const double mu = outward_component(quad_[m], side);
          if (mu <= 0.0) continue;
          const double wi = quad_[m].weight * face_trace(field, none, g, m, f);
          num += wi * mu;
          den += wi;
        }
        if (empty_fallback_ && den >= 0.0 && den < std::numeric_limits<double>::min()) {
          closure.bfactor(g, side, k) = c_iso[static_cast<std::size_t>(side)];
          ++used[gu];
          continue;
        }
        if (!(den > 0.0))
          throw DegenerateError("zero outgoing intensity on boundary face " + std::to_string(f) +
                                ", group " + std::to_string(g));
        closure.bfactor(g, side, k) = num / den;
      }
    }
  });
  if (fallbacks) *fallbacks = std::accumulate(used.begin(), used.end(), std::size_t{0});
}

ClosureRecord TransportSolver::compute_closures(const IntensityField& field,
                                                const BoundarySource& bc,
                                                std::size_t* fallbacks) const {
  std::size_t a = 0, b = 0;
  ClosureRecord rec = compute_eddington(field, bc, &a);
  compute_boundary_factors(field, rec, &b);
  if (fallbacks) *fallbacks = a + b;
  return rec;
}

double TransportSolver::incoming_energy(const BoundarySource& bc, Side side, int g) const {
  double sum = 0.0;
  for (const auto& d : quad_.directions())
    if (outward_component(d, side) < 0.0) sum += d.weight;
  return sum * bc.incoming(side, g) / material_.constants.c;
}

double TransportSolver::incoming_flux(const BoundarySource& bc, Side side, int g) const {
  double sum = 0.0;
  for (const auto& d : quad_.directions()) {
    const double mu = outward_component(d, side);
    if (mu < 0.0) sum += d.weight * mu;
  }
  return sum * bc.incoming(side, g);
}

}  // namespace ddet::transport
