#include "ddet/lowrank.hpp"

#include <cmath>
#include <complex>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "ddet/errors.hpp"

namespace ddet::lowrank {

namespace {

void require_finite(const Eigen::MatrixXd& a) {
  if (!a.allFinite()) throw DataError("snapshot matrix has non-finite entries");
}

void require_xi(double xi) {
  if (!(xi > 0.0 && xi <= 1.0))
    throw DomainError("relative truncation error must lie in (0, 1], got " + std::to_string(xi));
}

// lambda^n by binary exponentiation; lambda^0 = 1 even for lambda = 0.
std::complex<double> ipow(std::complex<double> base, int n) {
  std::complex<double> out(1.0, 0.0);
  while (n > 0) {
    if (n & 1) out *= base;
    base *= base;
    n >>= 1;
  }
  return out;
}

}  // namespace

Svd truncated_svd(const Eigen::MatrixXd& a) {
  require_finite(a);
  Svd out;
  if (a.size() == 0) return out;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.u = svd.matrixU();
  out.sigma = svd.singularValues();
  out.v = svd.matrixV();
  return out;
}

double tail_ratio(const Eigen::VectorXd& sigma, int k) {
  double total = 0.0;
  double tail = 0.0;
  // Smallest values first so the tail is not swamped by the leading terms.
  for (Eigen::Index i = sigma.size() - 1; i >= 0; --i) {
    const double s2 = sigma(i) * sigma(i);
    total += s2;
    if (i >= k) tail += s2;
  }
  if (total == 0.0) return 0.0;
  return std::sqrt(tail / total);
}

int select_rank(const Eigen::VectorXd& sigma, double xi) {
  require_xi(xi);
  const Eigen::Index n = sigma.size();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sigma(i) >= 0.0) || !std::isfinite(sigma(i)))
      throw DataError("singular values must be finite and non-negative");
    if (i > 0 && sigma(i) > sigma(i - 1))
      throw DataError("singular values must be non-increasing");
  }
  std::vector<double> suffix(static_cast<std::size_t>(n) + 1, 0.0);
  for (Eigen::Index i = n - 1; i >= 0; --i)
    suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i) + 1] + sigma(i) * sigma(i);
  const double total = suffix[0];
  if (!(total > 0.0)) throw DegenerateError("all singular values are zero");
  const double bound = xi * xi * total;
  for (Eigen::Index k = 1; k <= n; ++k)
    if (suffix[static_cast<std::size_t>(k)] <= bound) return static_cast<int>(k);
  return static_cast<int>(n);
}

PodModel pod_compress(const Eigen::MatrixXd& a, double xi) {
  require_xi(xi);
  require_finite(a);
  if (a.cols() < 2) throw ShapeError("POD needs at least two snapshots");
  PodModel m;
  m.xi = xi;
  m.mean = a.rowwise().mean();
  const Eigen::MatrixXd centered = a.colwise() - m.mean;
  const Svd svd = truncated_svd(centered);
  m.sigma = svd.sigma;
  // A centered matrix of zeros keeps one mode with zero coefficients.
  m.rank = svd.sigma(0) > 0.0 ? select_rank(svd.sigma, xi) : 1;
  m.modes = svd.u.leftCols(m.rank);
  m.coeffs = m.modes.transpose() * centered;
  m.xi_achieved = tail_ratio(svd.sigma, m.rank);
  return m;
}

DmdModel dmd_compress(const Eigen::MatrixXd& a, double xi, DmdVariant variant, double dt) {
  require_xi(xi);
  require_finite(a);
  if (!(dt > 0.0)) throw DomainError("DMD needs a positive time step");
  const bool subtract = variant == DmdVariant::kEquilibriumSubtracted;
  const Eigen::Index min_cols = subtract ? 4 : 3;
  if (a.cols() < min_cols)
    throw ShapeError("DMD needs at least " + std::to_string(min_cols) + " snapshots");

  DmdModel m;
  m.variant = variant;
  m.dt = dt;
  m.trained_columns = static_cast<int>(a.cols());

  Eigen::MatrixXd d;
  if (subtract) {
    m.equilibrium = a.col(a.cols() - 1);
    d = a.leftCols(a.cols() - 1).colwise() - m.equilibrium;
  } else {
    d = a;
  }
  const Eigen::MatrixXd x = d.leftCols(d.cols() - 1);
  const Eigen::MatrixXd xh = d.rightCols(d.cols() - 1);
  const Svd svd = truncated_svd(x);
  m.sigma = svd.sigma;
  if (!(svd.sigma(0) > 0.0)) {
    // No dynamics to fit: the model is the equilibrium (or zero) alone.
    m.rank = 0;
    m.modes.resize(a.rows(), 0);
    m.lambda.resize(0);
    m.omega.resize(0);
    m.beta.resize(0);
    return m;
  }
  const int k = select_rank(svd.sigma, xi);
  m.rank = k;
  const Eigen::MatrixXd uk = svd.u.leftCols(k);
  const Eigen::MatrixXd btilde = uk.transpose() * xh * svd.v.leftCols(k) *
                                 svd.sigma.head(k).cwiseInverse().asDiagonal();
  Eigen::EigenSolver<Eigen::MatrixXd> eig(btilde, true);
  if (eig.info() != Eigen::Success) throw SolverError("DMD eigenproblem did not converge");
  const Eigen::MatrixXcd w = eig.eigenvectors();
  m.lambda = eig.eigenvalues();
  m.modes = uk.cast<std::complex<double>>() * w;
  const Eigen::VectorXcd a0 = (uk.transpose() * d.col(0)).cast<std::complex<double>>();
  Eigen::FullPivLU<Eigen::MatrixXcd> lu(w);
  if (!lu.isInvertible()) throw SolverError("DMD eigenvectors are linearly dependent");
  m.beta = lu.solve(a0);
  m.omega.resize(k);
  for (int i = 0; i < k; ++i) m.omega(i) = std::log(m.lambda(i)) / dt;
  return m;
}

Reconstruction reconstruct_column(const CompressedModel& model, int n) {
  Reconstruction r;
  if (const auto* pod = std::get_if<PodModel>(&model)) {
    if (n < 0 || n >= pod->coeffs.cols())
      throw DomainError("POD model queried outside its trained steps (column " +
                        std::to_string(n) + ")");
    r.value = pod->mean + pod->modes * pod->coeffs.col(n);
  } else if (const auto* play = std::get_if<PlaybackModel>(&model)) {
    if (n < 0 || n >= play->data.cols())
      throw DomainError("playback model queried outside its stored steps (column " +
                        std::to_string(n) + ")");
    r.value = play->data.col(n);
  } else {
    const auto& dmd = std::get<DmdModel>(model);
    if (n < 0) throw DomainError("DMD model queried at a negative step");
    r.extrapolated = n >= dmd.trained_columns;
    Eigen::VectorXcd amp(dmd.rank);
    for (int i = 0; i < dmd.rank; ++i) amp(i) = dmd.beta(i) * ipow(dmd.lambda(i), n);
    const Eigen::VectorXcd z =
        dmd.rank > 0 ? Eigen::VectorXcd(dmd.modes * amp)
                     : Eigen::VectorXcd::Zero(dmd.equilibrium.size() > 0 ? dmd.equilibrium.size()
                                                                         : dmd.modes.rows());
    r.value = z.real();
    r.max_imag = z.size() > 0 ? z.imag().cwiseAbs().maxCoeff() : 0.0;
    if (dmd.equilibrium.size() > 0) r.value += dmd.equilibrium;
    const double scale = z.real().norm();
    if (r.max_imag > kImagTolerance * scale && r.max_imag > 0.0)
      throw DataError("DMD reconstruction is not real (imaginary residue " +
                      std::to_string(r.max_imag) + ")");
  }
  if (!r.value.allFinite()) throw DataError("reconstructed closure has non-finite values");
  return r;
}

Eigen::VectorXd reconstruct(const CompressedModel& model, int n) {
  return reconstruct_column(model, n).value;
}

int model_rank(const CompressedModel& model) {
  if (const auto* pod = std::get_if<PodModel>(&model)) return pod->rank;
  if (const auto* dmd = std::get_if<DmdModel>(&model)) return dmd->rank;
  return static_cast<int>(std::get<PlaybackModel>(model).data.cols());
}

Eigen::Index model_rows(const CompressedModel& model) {
  if (const auto* pod = std::get_if<PodModel>(&model)) return pod->mean.size();
  if (const auto* dmd = std::get_if<DmdModel>(&model))
    return dmd->equilibrium.size() > 0 ? dmd->equilibrium.size() : dmd->modes.rows();
  return std::get<PlaybackModel>(model).data.rows();
}

std::string model_kind(const CompressedModel& model) {
  if (std::holds_alternative<PodModel>(model)) return "pod";
  if (const auto* dmd = std::get_if<DmdModel>(&model))
    return dmd->variant == DmdVariant::kPlain ? "dmd" : "dmd-e";
  return "playback";
}

}  // namespace ddet::lowrank
