#pragma once

// Diagnostics over run records and snapshot sets: error series, right-boundary
// averages, breakout times and singular-value / rank tables.

#include <iosfwd>
#include <string>
#include <vector>

#include "ddet/drivers.hpp"
#include "ddet/lowrank.hpp"

namespace ddet::analysis {

/// ||x - ref||_2 / ||ref||_2; throws DegenerateError when ||ref|| = 0.
double relative_error(const std::vector<double>& x, const std::vector<double>& ref);

struct ErrorSeries {
  std::vector<double> time;
  std::vector<double> e_t;
  std::vector<double> e_e;

  double max_t() const;
  double max_e() const;
};

/// Per-step relative 2-norm errors of T and cell E against a reference run.
ErrorSeries relative_error_series(const drivers::RunRecord& run,
                                  const drivers::RunRecord& reference);

struct BreakoutSeries {
  std::vector<double> time;
  std::vector<double> f_r;  ///< boundary-averaged outward flux on the right side
  std::vector<double> e_r;
  std::vector<double> t_r;
};

/// dy-weighted means over the right boundary faces (F, E) and the right
/// column of cells (T), one entry per step.
BreakoutSeries boundary_averages(const drivers::RunRecord& run);
BreakoutSeries boundary_averages(const setup::SpatialMesh& mesh,
                                 const std::vector<loqd::GreyState>& states,
                                 const std::vector<double>& times);

struct Breakout {
  bool reached = false;
  int step = -1;             ///< index into the series
  double time = 0.0;         ///< time of that entry
  double interpolated = 0.0; ///< linear interpolation between the bracketing entries
};

/// First entry with value >= threshold.
Breakout breakout_time(const std::vector<double>& times, const std::vector<double>& values,
                       double threshold);

/// Rank grid of the tabulated studies.
const std::vector<double>& xi_grid();      ///< 1e-2 ... 1e-16
const std::vector<double>& xi_grid_dmd();  ///< adds 1e-18

struct SingularValueEntry {
  std::string name;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::VectorXd sigma;           ///< raw matrix
  Eigen::VectorXd sigma_centered;  ///< mean-subtracted matrix (POD)
  Eigen::VectorXd sigma_history;   ///< first m columns (DMD)
  int significant = 0;             ///< sigma > 1e-14 sigma_1
  std::vector<int> pod_ranks;      ///< per xi_grid()
  std::vector<int> dmd_ranks;      ///< per xi_grid_dmd()
  std::vector<int> dmde_ranks;     ///< per xi_grid_dmd()
};

std::vector<SingularValueEntry> singular_value_report(
    const std::vector<lowrank::SnapshotMatrix>& matrices);

void write_error_csv(std::ostream& out, const ErrorSeries& s);
void write_breakout_csv(std::ostream& out, const BreakoutSeries& s);
void write_breakout_result(std::ostream& out, const std::string& quantity, double threshold,
                           const Breakout& b);
void write_sigma_csv(std::ostream& out, const std::vector<SingularValueEntry>& report);
void write_rank_csv(std::ostream& out, const std::vector<SingularValueEntry>& report);

}  // namespace ddet::analysis
