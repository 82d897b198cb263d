#pragma once

// Snapshot compression: truncated SVD, POD and DMD (plain and
// equilibrium-subtracted), with a common reconstruction interface.

#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace ddet::lowrank {

/// Chronological closure snapshots, one column per time step.
struct SnapshotMatrix {
  std::string name;
  Eigen::MatrixXd data;
  int nx = 0;
  int ny = 0;
  int ng = 0;
  double t0 = 0.0;  ///< column n holds t0 + (n + 1) dt
  double dt = 0.0;
  bool uniform = true;

  Eigen::Index rows() const { return data.rows(); }
  Eigen::Index cols() const { return data.cols(); }
};

struct Svd {
  Eigen::MatrixXd u;
  Eigen::VectorXd sigma;
  Eigen::MatrixXd v;
};

/// Thin SVD; throws DataError on non-finite input.
Svd truncated_svd(const Eigen::MatrixXd& a);

/// Smallest k >= 1 with sum_{i>k} sigma_i^2 <= xi^2 sum_i sigma_i^2.
int select_rank(const Eigen::VectorXd& sigma, double xi);

/// Relative Frobenius tail sqrt(sum_{i>k} sigma_i^2 / sum_i sigma_i^2).
double tail_ratio(const Eigen::VectorXd& sigma, int k);

struct PodModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd modes;   ///< d x k
  Eigen::MatrixXd coeffs;  ///< k x N_t
  int rank = 0;
  double xi = 0.0;           ///< requested
  double xi_achieved = 0.0;  ///< tail ratio of the centered matrix at rank
  Eigen::VectorXd sigma;     ///< centered singular values
};

PodModel pod_compress(const Eigen::MatrixXd& a, double xi);

enum class DmdVariant { kPlain, kEquilibriumSubtracted };

struct DmdModel {
  DmdVariant variant = DmdVariant::kPlain;
  Eigen::MatrixXcd modes;   ///< projected modes, d x k
  Eigen::VectorXcd lambda;  ///< discrete eigenvalues
  Eigen::VectorXcd omega;   ///< principal log(lambda) / dt
  Eigen::VectorXcd beta;    ///< amplitudes fitted to the first snapshot
  Eigen::VectorXd equilibrium;  ///< a_b (equilibrium-subtracted only)
  double dt = 1.0;
  int rank = 0;
  int trained_columns = 0;  ///< snapshots available at training time
  Eigen::VectorXd sigma;    ///< singular values of the history matrix X
};

/// Projected-mode DMD. The equilibrium-subtracted variant drops the last
/// column a^m, fits on a^n - a^m and adds a^m back on reconstruction.
DmdModel dmd_compress(const Eigen::MatrixXd& a, double xi, DmdVariant variant, double dt);

/// Lossless passthrough of the snapshot columns (testing aid).
struct PlaybackModel {
  Eigen::MatrixXd data;
};

using CompressedModel = std::variant<PodModel, DmdModel, PlaybackModel>;

struct Reconstruction {
  Eigen::VectorXd value;
  bool extrapolated = false;
  double max_imag = 0.0;  ///< DMD only, before the real part is taken
};

/// Column n (0-based) of the modelled snapshot matrix. POD and playback
/// throw DomainError outside the trained window; DMD extrapolates.
Reconstruction reconstruct_column(const CompressedModel& model, int n);
Eigen::VectorXd reconstruct(const CompressedModel& model, int n);

int model_rank(const CompressedModel& model);
Eigen::Index model_rows(const CompressedModel& model);
std::string model_kind(const CompressedModel& model);

/// Imaginary residue tolerated before a DMD reconstruction is rejected,
/// relative to the vector norm.
inline constexpr double kImagTolerance = 1e-9;

}  // namespace ddet::lowrank
