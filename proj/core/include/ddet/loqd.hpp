#pragma once

// Multigroup and effective grey low-order quasidiffusion (LOQD) systems.
//
// Unknowns per group (or for the grey problem) are ordered
//   [ E_i (Dc) | E_f (Dv + Dh) | F_f (Dv + Dh) ],
// with faces in the combined order of SpatialMesh (vertical first). F_f is
// the flux component along +x on vertical faces and along +y on horizontal
// faces.

#include <cstddef>
#include <vector>

#include "ddet/problem.hpp"
#include "ddet/transport.hpp"

namespace ddet::loqd {

using setup::Constants;
using setup::Side;
using setup::SpatialMesh;
using transport::ClosureRecord;

/// Group moments E_{g,i}, E_{g,f}, F_{g,f}, group-major ([g * D + p]).
struct MultigroupMoments {
  int ng = 0;
  std::size_t cells = 0;
  std::size_t faces = 0;
  std::vector<double> e_cell;
  std::vector<double> e_face;
  std::vector<double> f_face;

  static MultigroupMoments zeros(const SpatialMesh& mesh, int ng);
  /// E_g = 4 pi B_g(T) / c everywhere, F_g = 0.
  static MultigroupMoments equilibrium(const SpatialMesh& mesh, const setup::FrequencyGrid& grid,
                                       double temperature, const Constants& constants);

  double& ec(int g, std::size_t c) { return e_cell[static_cast<std::size_t>(g) * cells + c]; }
  double ec(int g, std::size_t c) const { return e_cell[static_cast<std::size_t>(g) * cells + c]; }
  double& ef(int g, std::size_t f) { return e_face[static_cast<std::size_t>(g) * faces + f]; }
  double ef(int g, std::size_t f) const { return e_face[static_cast<std::size_t>(g) * faces + f]; }
  double& ff(int g, std::size_t f) { return f_face[static_cast<std::size_t>(g) * faces + f]; }
  double ff(int g, std::size_t f) const { return f_face[static_cast<std::size_t>(g) * faces + f]; }

  std::vector<double> total_e_cell() const;
  std::vector<double> total_e_face() const;
  std::vector<double> total_f_face() const;
};

/// Total (grey) radiation moments and material temperature.
struct GreyState {
  std::vector<double> e_cell;
  std::vector<double> e_face;
  std::vector<double> f_face;
  std::vector<double> temperature;
};

/// Incoming half-range energy density and normal flux per boundary face and
/// group, stacked like the boundary factors ([g * nb + slot], sides L, B, R, T).
struct BoundaryInflow {
  int ng = 0;
  std::size_t per_group = 0;
  std::vector<double> energy;
  std::vector<double> flux;  ///< sum over incoming directions of w (n.Omega) I_in, <= 0

  static BoundaryInflow from_source(const SpatialMesh& mesh,
                                    const setup::AngularQuadrature& quadrature,
                                    const transport::BoundarySource& bc,
                                    const Constants& constants);
  double e(int g, std::size_t slot) const { return energy[static_cast<std::size_t>(g) * per_group + slot]; }
  double f(int g, std::size_t slot) const { return flux[static_cast<std::size_t>(g) * per_group + slot]; }
};

/// Position of boundary face k of a side inside a per-group boundary block.
std::size_t boundary_slot(const SpatialMesh& mesh, Side side, int k);

/// Index of the half-cell of cell c adjacent to its face on `side`.
inline std::size_t half_cell(std::size_t cell, Side side) {
  return cell * 4 + static_cast<std::size_t>(side);
}

/// Spectrum-averaged coefficients of the effective grey problem.
struct SpectrumAveraged {
  // Cell averages.
  std::vector<double> kappa_e;
  std::vector<double> kappa_b;
  std::vector<double> kappa_rx;  ///< diagnostic: |F|-weighted, cell-centred flux
  std::vector<double> kappa_ry;
  std::vector<double> eta_x;  ///< diagnostic
  std::vector<double> eta_y;
  // E-weighted grey Eddington tensor on the closure grids.
  std::vector<double> f_xx_c, f_yy_c, f_xx_v, f_xy_v, f_yy_h, f_xy_h;
  // Half-cell flux-equation coefficients, indexed by half_cell().
  std::vector<double> d_face;  ///< D-bar at the half-cell's own face
  std::vector<double> d_cell;  ///< D-bar at the cell centre (same component)
  std::vector<double> x_hi;    ///< cross-component D-bar on the upper/right perpendicular face
  std::vector<double> x_lo;    ///< ... on the lower/left perpendicular face
  std::vector<double> p;       ///< lagged flux term p_f
  // Boundary faces in boundary_slot order.
  std::vector<double> c_bar;
  std::vector<double> e_in;
  std::vector<double> f_in;
  std::size_t c_bar_fallbacks = 0;  ///< faces where the C-bar weight vanished
  std::vector<double> e_fraction;   ///< E_{g,i} / sum_g E_{g,i}, [g * Dc + c]
};

/// Per-group opacities and Planck sources at cell temperatures, [g * Dc + c].
struct GroupMaterial {
  std::vector<double> kappa;
  std::vector<double> planck;
};
GroupMaterial group_material(const std::vector<double>& temperature,
                             const setup::FrequencyGrid& grid,
                             const setup::MaterialModel& material);

struct MultigroupOptions {
  int threads = 1;
  double residual_tol = 1e-10;  ///< scaled residual above which a solve is rejected
};

struct MultigroupDiagnostics {
  double max_residual = 0.0;  ///< scaled max-norm over all groups
};

/// Backward-Euler multigroup LOQD step for fixed closures and material data.
MultigroupMoments solve_multigroup_loqd(const SpatialMesh& mesh, const ClosureRecord& closure,
                                        const GroupMaterial& material,
                                        const MultigroupMoments& previous,
                                        const BoundaryInflow& inflow, double dt,
                                        const Constants& constants,
                                        const MultigroupOptions& options = {},
                                        MultigroupDiagnostics* diagnostics = nullptr);

/// Scaled max-norm residual of the multigroup equations for group g.
double multigroup_residual(const SpatialMesh& mesh, const ClosureRecord& closure,
                           const GroupMaterial& material, const MultigroupMoments& previous,
                           const BoundaryInflow& inflow, double dt, const Constants& constants,
                           const MultigroupMoments& solution, int g);

SpectrumAveraged compute_grey_coefficients(const SpatialMesh& mesh, const MultigroupMoments& mg,
                                           const GroupMaterial& material,
                                           const ClosureRecord& closure,
                                           const MultigroupMoments& previous,
                                           const BoundaryInflow& inflow, double dt,
                                           const Constants& constants);

struct GreyOptions {
  double tol = 1e-13;
  int max_iterations = 100;
  /// When both are set, the material energy balance evaluates kappa_g(T) and
  /// B_g(T) at the unknown temperature (group spectrum of E held at
  /// coeffs.e_fraction) instead of using the fixed kappa_E / kappa_B.
  const setup::FrequencyGrid* grid = nullptr;
  const setup::MaterialModel* material = nullptr;
};

struct GreyDiagnostics {
  int iterations = 0;
  std::vector<double> history;  ///< scaled max-norm residual per iteration
};

/// Coupled grey LOQD + material energy balance, solved by Newton's method with
/// T eliminated per cell. `guess` seeds (E_i, E_f, F_f); its temperature is ignored.
GreyState solve_grey_problem(const SpatialMesh& mesh, const SpectrumAveraged& coeffs,
                             const GreyState& previous, const GreyState& guess, double dt,
                             double heat_capacity, const Constants& constants,
                             const GreyOptions& options = {},
                             GreyDiagnostics* diagnostics = nullptr);

/// Material temperature from the backward-Euler MEB for a given E, with dT/dE.
struct MebSolution {
  double temperature = 0.0;
  double dtde = 0.0;
};
MebSolution solve_meb(double e, double t_old, double kappa_e, double kappa_b, double dt,
                      double heat_capacity, const Constants& constants);

/// Same balance with temperature-dependent group data:
///   cv (T - T_old)/dt = c E sum_g kappa_g(T) w_g - 4 pi sum_g kappa_g(T) B_g(T),
/// w_g being the group fractions of E. Bracketed Newton from `t_guess`.
MebSolution solve_meb_spectral(double e, double t_old, const std::vector<double>& e_fraction, double dt,
                               double heat_capacity, const setup::FrequencyGrid& grid,
                               const setup::MaterialModel& material, double t_guess);

/// Scaled max-norm residual of the grey radiation equations (energy balance
/// with emission c kappa_B a_R T^4, flux equations, boundary rows) at a state.
double grey_residual(const SpatialMesh& mesh, const SpectrumAveraged& coeffs,
                     const std::vector<double>& e_cell_old, const GreyState& state, double dt,
                     const Constants& constants);

/// Residual of the material energy balance per cell, scaled by its terms.
double meb_residual(const SpectrumAveraged& coeffs, const GreyState& previous,
                    const GreyState& state, double dt, double heat_capacity,
                    const Constants& constants);

}  // namespace ddet::loqd
