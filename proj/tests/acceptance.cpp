// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ddet/analysis.hpp"
#include "ddet/config.hpp"
#include "ddet/drivers.hpp"
#include "ddet/lowrank.hpp"
#include "ddet/problem.hpp"
#include "ddet/transport.hpp"

using namespace ddet;

namespace {

int failures = 0;

void report(int id, const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %2d %s: %s\n", ok ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

double max_error(const drivers::RunRecord& run, const drivers::RunRecord& fom) {
  const analysis::ErrorSeries e = analysis::relative_error_series(run, fom);
  return std::max(e.max_t(), e.max_e());
}

drivers::RunRecord rom_with(const setup::RunConfig& cfg, const std::vector<lowrank::SnapshotMatrix>& snaps,
                            double xi) {
  std::vector<lowrank::CompressedModel> models;
  for (const auto& s : snaps) {
    if (xi > 0.0)
      models.emplace_back(lowrank::pod_compress(s.data, xi));
    else
      models.emplace_back(lowrank::PlaybackModel{s.data});
  }
  return drivers::run_rom(cfg, drivers::model_provider(std::move(models), cfg.nx, cfg.ny,
                                                       static_cast<int>(cfg.group_upper.size())));
}

void dimensions() {
  const setup::RunConfig full = setup::preset("fleck-cummings-2d");
  const int ng = static_cast<int>(full.group_upper.size());
  const std::size_t dirs = setup::build_quadrature(full.quadrature_spec()).size();
  const auto rows = drivers::snapshot_rows(full.nx, full.ny, ng);
  long long d_f = 0;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) d_f += rows[i];
  const auto d_i = static_cast<long long>(transport::IntensityField::dof_count(full.nx, full.ny, ng, dirs));
  const long long ratio = d_i / d_f;
  const auto rounded = static_cast<long long>(std::llround(static_cast<double>(d_i) / static_cast<double>(d_f)));
  report(1, "dimension bookkeeping", d_f == 42160 && d_i == 3916800 && ratio == 92 && rounded == 93,
         "D_f=" + std::to_string(d_f) + " D_I=" + std::to_string(d_i) + " floor=" + std::to_string(ratio) +
             " rounded=" + std::to_string(rounded));
}

void isotropic_closure() {
  const setup::RunConfig full = setup::preset("fleck-cummings-2d");
  transport::TransportSolver s(full.mesh(), setup::build_quadrature(full.quadrature_spec()), full.grid(),
                               full.material());
  const auto bc = transport::BoundarySource::blackbody({true, true, true, true}, 0.5, full.grid(),
                                                       full.constants);
  const transport::ClosureRecord r = s.compute_closures(s.equilibrium_field(0.5), bc);
  double worst = 0.0;
  for (const auto* v : {&r.fxx_c, &r.fyy_c, &r.fxx_v, &r.fyy_h})
    for (double x : *v) worst = std::max(worst, std::abs(x - 1.0 / 3.0));
  for (const auto* v : {&r.fxy_v, &r.fxy_h})
    for (double x : *v) worst = std::max(worst, std::abs(x));
  double worst_c = 0.0;
  for (double x : r.boundary) worst_c = std::max(worst_c, std::abs(x - 0.5));
  report(2, "isotropic closure identities", worst <= 1e-10 && worst_c <= 1e-10,
         "max |f - diag(1/3)|=" + fmt(worst) + " max |C - 1/2|=" + fmt(worst_c));
}

void dmd_oracle() {
  Eigen::MatrixXd a(2, 12);
  Eigen::Vector2d x(1.0, 1.0);
  for (int n = 0; n < 12; ++n) {
    a.col(n) = x;
    x = Eigen::Vector2d(0.9 * x(0), 0.5 * x(1));
  }
  const lowrank::DmdModel m = lowrank::dmd_compress(a, 1e-12, lowrank::DmdVariant::kPlain, 1.0);
  std::vector<double> ev;
  double imag = 0.0;
  for (Eigen::Index i = 0; i < m.lambda.size(); ++i) {
    ev.push_back(m.lambda(i).real());
    imag = std::max(imag, std::abs(m.lambda(i).imag()));
  }
  std::sort(ev.begin(), ev.end());
  const double eig_err =
      ev.size() == 2 ? std::max({std::abs(ev[0] - 0.5), std::abs(ev[1] - 0.9), imag}) : 1.0;
  double rec = 0.0;
  for (int n = 0; n < 12; ++n)
    rec = std::max(rec, (lowrank::reconstruct(m, n) - a.col(n)).norm() / a.col(n).norm());
  report(8, "linear-system DMD oracle", eig_err <= 1e-10 && rec <= 1e-10,
         "eigenvalue error=" + fmt(eig_err) + " reconstruction error=" + fmt(rec));
}

void eckart_young() {
  std::mt19937 rng(20240611);
  std::uniform_int_distribution<int> dim(2, 40);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  int bad_rank = 0;
  for (int t = 0; t < 100; ++t) {
    const int m = dim(rng), n = dim(rng);
    Eigen::MatrixXd a(m, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
    const lowrank::Svd s = lowrank::truncated_svd(a);
    const int r = static_cast<int>(s.sigma.size());
    // xi strictly between the tail ratios at target - 1 and target, so the
    // minimal admissible rank is the target.
    const int target = 1 + static_cast<int>(unit(rng) * (r - 1));
    const double hi = target > 1 ? lowrank::tail_ratio(s.sigma, target - 1) : 1.0;
    const double lo = lowrank::tail_ratio(s.sigma, target);
    const double xi = std::sqrt(hi * lo);
    const int k = lowrank::select_rank(s.sigma, xi);
    const Eigen::MatrixXd ak = s.u.leftCols(k) * s.sigma.head(k).asDiagonal() * s.v.leftCols(k).transpose();
    const double lhs = (a - ak).squaredNorm();
    double rhs = 0.0;
    for (Eigen::Index i = k; i < s.sigma.size(); ++i) rhs += s.sigma(i) * s.sigma(i);
    worst = std::max(worst, std::abs(lhs - rhs) / rhs);
    if (k != target) ++bad_rank;
  }
  report(9, "Eckart-Young and rank selection", worst <= 1e-10 && bad_rank == 0,
         "max relative tail mismatch=" + fmt(worst) + " non-minimal ranks=" + std::to_string(bad_rank));
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  dimensions();
  isotropic_closure();

  const setup::RunConfig cfg = setup::preset("fleck-cummings-desk");
  const drivers::RunRecord fom = drivers::run_fom(cfg);
  double defect = 0.0;
  for (const auto& s : fom.steps) defect = std::max(defect, s.energy_defect);
  report(3, "energy conservation (desk FOM)", defect <= 1e-10 && fom.steps.size() == 50,
         "max relative defect=" + fmt(defect) + " over " + std::to_string(fom.steps.size()) + " steps");

  const auto snaps = drivers::record_snapshots(fom);
  const double e_play = max_error(rom_with(cfg, snaps, 0.0), fom);
  report(4, "identity-playback ROM", e_play <= 1e-10, "max relative error=" + fmt(e_play));

  const double e_full = max_error(rom_with(cfg, snaps, 1e-16), fom);
  report(5, "POD xi=1e-16 reproduces FOM", e_full <= 1e-9, "max relative error=" + fmt(e_full));

  std::vector<double> e_pod;
  drivers::RunRecord rom_1e4;
  for (double xi : {1e-2, 1e-4, 1e-6}) {
    drivers::RunRecord r = rom_with(cfg, snaps, xi);
    e_pod.push_back(max_error(r, fom));
    if (xi == 1e-4) rom_1e4 = std::move(r);
  }
  const bool monotone = e_pod[1] * 10.0 <= e_pod[0] && e_pod[2] * 10.0 <= e_pod[1];
  report(6, "monotone POD convergence", monotone,
         "errors at 1e-2/1e-4/1e-6 = " + fmt(e_pod[0]) + " / " + fmt(e_pod[1]) + " / " + fmt(e_pod[2]));

  const auto svd = analysis::singular_value_report(snaps);
  const auto& grid = analysis::xi_grid();
  const auto& dgrid = analysis::xi_grid_dmd();
  int violations = 0;
  std::ostringstream worst;
  for (const auto& e : svd) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto it = std::find(dgrid.begin(), dgrid.end(), grid[i]);
      const int dmd = e.dmd_ranks[static_cast<std::size_t>(it - dgrid.begin())];
      if (dmd > e.pod_ranks[i]) {
        if (violations == 0)
          worst << " first: " << e.name << " xi=" << grid[i] << " dmd=" << dmd << " pod=" << e.pod_ranks[i];
        ++violations;
      }
    }
  }
  report(7, "DMD rank <= POD rank", violations == 0,
         std::to_string(svd.size()) + " matrices x " + std::to_string(grid.size()) + " xi, violations=" +
             std::to_string(violations) + worst.str());

  dmd_oracle();
  eckart_young();

  const analysis::BreakoutSeries bf = analysis::boundary_averages(fom);
  double drop = 0.0, fmax = -1e300, emax = -1e300;
  for (std::size_t n = 0; n < bf.f_r.size(); ++n) {
    fmax = std::max(fmax, bf.f_r[n]);
    emax = std::max(emax, bf.e_r[n]);
    drop = std::max({drop, (fmax - bf.f_r[n]) / std::abs(fmax), (emax - bf.e_r[n]) / std::abs(emax)});
  }
  const analysis::BreakoutSeries br = analysis::boundary_averages(rom_1e4);
  const double half = 0.5 * *std::max_element(bf.f_r.begin(), bf.f_r.end());
  const analysis::Breakout b_fom = analysis::breakout_time(bf.time, bf.f_r, half);
  const analysis::Breakout b_rom = analysis::breakout_time(br.time, br.f_r, half);
  const bool same = b_fom.reached && b_rom.reached && std::abs(b_fom.step - b_rom.step) <= 1;
  report(10, "breakout structure", drop <= 1e-12 && same,
         "max drop below running max=" + fmt(drop) + " half-max F breakout FOM step " +
             std::to_string(b_fom.step) + " (t=" + fmt(b_fom.time) + "), ROM step " +
             std::to_string(b_rom.step) + " (t=" + fmt(b_rom.time) + ")");

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("%d of 10 criteria failed (%.0f s)\n", failures, secs);
  return failures == 0 ? 0 : 1;
}
