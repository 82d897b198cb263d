#pragma once

// Backward-Euler discrete-ordinates transport with simple corner balance, and
// extraction of the Eddington tensor and boundary factors from its solution.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "ddet/problem.hpp"

namespace ddet::transport {

using setup::AngularQuadrature;
using setup::FrequencyGrid;
using setup::MaterialModel;
using setup::Side;
using setup::SpatialMesh;

/// Corner k of a cell sits at (ix, iy) with k = ix + 2*iy; ix = 0 is the left half.
inline constexpr int kCorners = 4;

/// Corner intensities I[g][m][cell][corner], stored contiguously in that order.
class IntensityField {
 public:
  IntensityField() = default;
  IntensityField(int num_groups, std::size_t num_directions, std::size_t num_cells,
                 double value = 0.0);

  static std::size_t dof_count(int nx, int ny, int num_groups, std::size_t num_directions) {
    return static_cast<std::size_t>(kCorners) * static_cast<std::size_t>(nx) *
           static_cast<std::size_t>(ny) * static_cast<std::size_t>(num_groups) * num_directions;
  }

  int num_groups() const noexcept { return groups_; }
  std::size_t num_directions() const noexcept { return directions_; }
  std::size_t num_cells() const noexcept { return cells_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t index(int g, std::size_t m, std::size_t cell, int corner) const noexcept {
    return ((static_cast<std::size_t>(g) * directions_ + m) * cells_ + cell) * kCorners +
           static_cast<std::size_t>(corner);
  }
  double& at(int g, std::size_t m, std::size_t cell, int corner) {
    return data_[index(g, m, cell, corner)];
  }
  double at(int g, std::size_t m, std::size_t cell, int corner) const {
    return data_[index(g, m, cell, corner)];
  }

  /// All corners of all cells for one (group, direction) pair.
  std::span<double> block(int g, std::size_t m) {
    return {data_.data() + index(g, m, 0, 0), cells_ * kCorners};
  }
  std::span<const double> block(int g, std::size_t m) const {
    return {data_.data() + index(g, m, 0, 0), cells_ * kCorners};
  }

  /// Corner-averaged cell intensity.
  double cell_value(int g, std::size_t m, std::size_t cell) const;

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

 private:
  int groups_ = 0;
  std::size_t directions_ = 0;
  std::size_t cells_ = 0;
  std::vector<double> data_;
};

/// Isotropic incoming intensity per side and group, uniform along each side.
struct BoundarySource {
  std::array<std::vector<double>, 4> intensity;  // [side][g]

  static BoundarySource vacuum(int num_groups);
  /// Blackbody B_g(T) on the flagged sides (L, B, R, T order), vacuum elsewhere.
  static BoundarySource blackbody(const std::array<bool, 4>& hot, double temperature,
                                  const FrequencyGrid& grid, const setup::Constants& constants);

  double incoming(Side side, int g) const {
    return intensity[static_cast<std::size_t>(side)][static_cast<std::size_t>(g)];
  }
  int num_groups() const { return static_cast<int>(intensity[0].size()); }
};

/// Eddington tensor components and boundary factors for one time step.
///
/// Every array is group-major: entry (g, p) of an array over D points lives
/// at g*D + p. Boundary factors per group are stacked L (ny), B (nx),
/// R (ny), T (nx), each side counted along +y or +x.
struct ClosureRecord {
  int nx = 0;
  int ny = 0;
  int ng = 0;
  std::vector<double> fxx_c;  ///< ng * Dc
  std::vector<double> fyy_c;  ///< ng * Dc
  std::vector<double> fxx_v;  ///< ng * Dv
  std::vector<double> fxy_v;  ///< ng * Dv
  std::vector<double> fyy_h;  ///< ng * Dh
  std::vector<double> fxy_h;  ///< ng * Dh
  std::vector<double> boundary;  ///< ng * 2(nx+ny)

  static ClosureRecord zeros(int nx, int ny, int ng);
  /// Isotropic closure: diag(1/3) everywhere, C = 1/2 on every boundary face.
  static ClosureRecord isotropic(int nx, int ny, int ng);

  std::size_t num_cells() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t num_vfaces() const { return static_cast<std::size_t>(nx + 1) * ny; }
  std::size_t num_hfaces() const { return static_cast<std::size_t>(nx) * (ny + 1); }
  std::size_t boundary_per_group() const { return 2 * static_cast<std::size_t>(nx + ny); }

  /// Offset of side s inside one group's boundary block.
  std::size_t side_offset(Side side) const;
  double& bfactor(int g, Side side, int k) {
    return boundary[static_cast<std::size_t>(g) * boundary_per_group() + side_offset(side) +
                    static_cast<std::size_t>(k)];
  }
  double bfactor(int g, Side side, int k) const {
    return boundary[static_cast<std::size_t>(g) * boundary_per_group() + side_offset(side) +
                    static_cast<std::size_t>(k)];
  }

  /// Eddington degrees of freedom per step, 2 (Dv + Dh + Dc) Ng.
  static std::size_t tensor_dof_count(int nx, int ny, int ng);
  std::size_t tensor_dof_count() const { return tensor_dof_count(nx, ny, ng); }

  /// Shape and finiteness check against a mesh / group count.
  void require_shape(int nx_expected, int ny_expected, int ng_expected) const;
};

/// Counts of bound violations found in a closure record.
struct ClosureBounds {
  std::size_t diagonal_out_of_range = 0;  ///< f_xx or f_yy outside [0, 1]
  std::size_t boundary_out_of_range = 0;  ///< C outside (0, 1)
};
ClosureBounds check_closure_bounds(const ClosureRecord& closure);

enum class SweepOrder { kRowMajor, kWavefront };

struct SweepStats {
  std::size_t negative_count = 0;
  double min_value = 0.0;
};

/// Discrete-ordinates SCB solver bound to a mesh, quadrature and group set.
class TransportSolver {
 public:
  TransportSolver(SpatialMesh mesh, AngularQuadrature quadrature, FrequencyGrid grid,
                  MaterialModel material, int threads = 1);

  const SpatialMesh& mesh() const noexcept { return mesh_; }
  const AngularQuadrature& quadrature() const noexcept { return quad_; }
  const FrequencyGrid& grid() const noexcept { return grid_; }
  const MaterialModel& material() const noexcept { return material_; }

  void set_sweep_order(SweepOrder order) { order_ = order; }
  void set_threads(int threads);
  /// When on, a closure point whose angular integral is below the smallest
  /// normal double (radiation absent or underflowed) gets the isotropic
  /// quadrature values instead of raising DegenerateError. Negative
  /// integrals always raise.
  void set_empty_fallback(bool on) { empty_fallback_ = on; }

  IntensityField make_field(double value = 0.0) const;
  /// Isotropic I = B_g(T) in every corner and direction.
  IntensityField equilibrium_field(double temperature) const;

  /// One backward-Euler step at the per-cell temperatures `temperature`.
  IntensityField sweep(const std::vector<double>& temperature, const IntensityField& previous,
                       double dt, const BoundarySource& bc, SweepStats* stats = nullptr) const;

  /// Same step with explicit per-cell opacity and Planck source arrays,
  /// indexed [g * Dc + cell].
  IntensityField sweep_sources(const std::vector<double>& kappa, const std::vector<double>& planck,
                               const IntensityField& previous, double dt, const BoundarySource& bc,
                               SweepStats* stats = nullptr) const;

  /// Face-trace intensity on combined face f (vertical faces first) for
  /// group g, direction m: mean of the two upwind corners, or the incoming
  /// boundary value.
  double face_trace(const IntensityField& field, const BoundarySource& bc, int g, std::size_t m,
                    std::size_t face) const;

  /// Eddington components (tensor part of the closure record); the boundary
  /// block is left zero. `fallbacks` receives the number of isotropic
  /// substitutions.
  ClosureRecord compute_eddington(const IntensityField& field, const BoundarySource& bc,
                                  std::size_t* fallbacks = nullptr) const;
  /// Fills the boundary-factor block of `closure`.
  void compute_boundary_factors(const IntensityField& field, ClosureRecord& closure,
                                std::size_t* fallbacks = nullptr) const;
  ClosureRecord compute_closures(const IntensityField& field, const BoundarySource& bc,
                                 std::size_t* fallbacks = nullptr) const;

  /// Half-range incoming energy density (1/c) sum_in w I_in and normal flux
  /// sum_in w (n.Omega) I_in (negative) for one side / group.
  double incoming_energy(const BoundarySource& bc, Side side, int g) const;
  double incoming_flux(const BoundarySource& bc, Side side, int g) const;

  std::vector<double> opacities(const std::vector<double>& temperature) const;  ///< [g*Dc+c]
  std::vector<double> planck(const std::vector<double>& temperature) const;     ///< [g*Dc+c]

 private:
  void sweep_one(int g, std::size_t m, const double* kappa, const double* source_b,
                 const IntensityField& previous, double dt, const BoundarySource& bc,
                 IntensityField& out) const;

  SpatialMesh mesh_;
  AngularQuadrature quad_;
  FrequencyGrid grid_;
  MaterialModel material_;
  int threads_ = 1;
  SweepOrder order_ = SweepOrder::kRowMajor;
  bool empty_fallback_ = false;
};

}  // namespace ddet::transport
