#pragma once

// Time stepping: the full-order MLQD loop with transport closures and the
// reduced-order loop with closures reconstructed from compressed models.

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ddet/config.hpp"
#include "ddet/loqd.hpp"
#include "ddet/lowrank.hpp"
#include "ddet/transport.hpp"

namespace ddet::drivers {

using loqd::GreyState;
using transport::ClosureRecord;

struct TimeGrid {
  double t0 = 0.0;
  double dt = 0.0;
  int num_steps = 0;

  double time(int n) const { return t0 + n * dt; }  ///< n = 0 is the initial state
  void validate() const;
};

struct StepRecord {
  GreyState state;
  int iterations = 0;            ///< outer (FOM) or inner (ROM) iterations
  double last_change = 0.0;      ///< final convergence measure
  int newton_iterations = 0;     ///< summed over iterations
  double grey_residual = 0.0;    ///< final Newton residual
  double multigroup_residual = 0.0;
  double energy_defect = 0.0;    ///< relative global energy balance defect
  std::size_t negative_intensities = 0;
  std::size_t closure_violations = 0;  ///< Eddington / boundary-factor bound violations
  std::size_t closure_fallbacks = 0;   ///< isotropic substitutions where radiation is absent
};

struct RunRecord {
  std::string kind = "fom";  ///< "fom" or "rom"
  int nx = 0;
  int ny = 0;
  int ng = 0;
  std::vector<double> dx;
  std::vector<double> dy;
  TimeGrid time;
  GreyState initial;
  std::vector<StepRecord> steps;
  std::vector<ClosureRecord> closures;                ///< converged closure per step (FOM)
  std::vector<loqd::MultigroupMoments> multigroup;    ///< per step when requested

  setup::SpatialMesh mesh() const;
  /// T (or E) at step n, n = 0 being the initial state.
  const GreyState& state(int n) const { return n == 0 ? initial : steps[static_cast<std::size_t>(n - 1)].state; }
};

struct RunOptions {
  bool keep_multigroup = false;
  bool keep_closures = true;
  transport::SweepOrder sweep_order = transport::SweepOrder::kRowMajor;
  std::ostream* log = nullptr;  ///< per-step progress lines
};

RunRecord run_fom(const setup::RunConfig& config, const RunOptions& options = {});

/// Closure for step n (1-based).
using ClosureProvider = std::function<ClosureRecord(int step)>;

RunRecord run_rom(const setup::RunConfig& config, const ClosureProvider& closures,
                  const RunOptions& options = {});

/// Seven snapshot matrices in the order of snapshot_names().
inline constexpr std::size_t kNumSnapshotMatrices = 7;
const std::array<std::string, kNumSnapshotMatrices>& snapshot_names();

std::vector<lowrank::SnapshotMatrix> record_snapshots(const RunRecord& run);

/// Column n of every snapshot matrix back into a closure record.
ClosureRecord unstack(const std::array<Eigen::VectorXd, kNumSnapshotMatrices>& columns, int nx,
                      int ny, int ng);
std::array<Eigen::VectorXd, kNumSnapshotMatrices> stack(const ClosureRecord& closure);

/// Rows of each snapshot matrix for a layout.
std::array<Eigen::Index, kNumSnapshotMatrices> snapshot_rows(int nx, int ny, int ng);

/// Provider reconstructing step n from column n - 1 of each model.
ClosureProvider model_provider(std::vector<lowrank::CompressedModel> models, int nx, int ny,
                               int ng);

/// Relative global energy balance defect of one converged step:
/// |sum A dE/dt + sum A cv dT/dt + outward boundary flux| over the sum of
/// magnitudes of the same terms, each floored by its rounding level (1e3 eps times
/// the stored energy per step, 1e3 eps c E per unit boundary length).
double energy_defect(const setup::SpatialMesh& mesh, const GreyState& previous,
                     const GreyState& current, double dt, double heat_capacity,
                     double light_speed);

}  // namespace ddet::drivers
