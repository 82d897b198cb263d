#include "ddet/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "ddet/errors.hpp"

namespace ddet::analysis {

double relative_error(const std::vector<double>& x, const std::vector<double>& ref) {
  if (x.size() != ref.size()) throw ShapeError("error fields differ in size");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (x[i] - ref[i]) * (x[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  if (!(den > 0.0)) throw DegenerateError("reference field has zero norm");
  return std::sqrt(num / den);
}

double ErrorSeries::max_t() const {
  return e_t.empty() ? 0.0 : *std::max_element(e_t.begin(), e_t.end());
}
double ErrorSeries::max_e() const {
  return e_e.empty() ? 0.0 : *std::max_element(e_e.begin(), e_e.end());
}

namespace {

void require_same_grid(const drivers::RunRecord& a, const drivers::RunRecord& b) {
  if (a.nx != b.nx || a.ny != b.ny || a.dx != b.dx || a.dy != b.dy)
    throw ShapeError("runs are on different spatial grids");
  if (a.steps.size() != b.steps.size() || a.time.dt != b.time.dt || a.time.t0 != b.time.t0)
    throw ShapeError("runs are on different time grids");
}

int rank_or(const Eigen::VectorXd& sigma, double xi, int fallback) {
  if (sigma.size() == 0 || !(sigma(0) > 0.0)) return fallback;
  return lowrank::select_rank(sigma, xi);
}

}  // namespace

ErrorSeries relative_error_series(const drivers::RunRecord& run,
                                  const drivers::RunRecord& reference) {
  require_same_grid(run, reference);
  ErrorSeries s;
  for (std::size_t n = 0; n < run.steps.size(); ++n) {
    s.time.push_back(reference.time.time(static_cast<int>(n) + 1));
    s.e_t.push_back(relative_error(run.steps[n].state.temperature,
                                   reference.steps[n].state.temperature));
    s.e_e.push_back(relative_error(run.steps[n].state.e_cell, reference.steps[n].state.e_cell));
  }
  return s;
}

BreakoutSeries boundary_averages(const setup::SpatialMesh& mesh,
                                 const std::vector<loqd::GreyState>& states,
                                 const std::vector<double>& times) {
  if (states.size() != times.size()) throw ShapeError("one time per state is required");
  BreakoutSeries b;
  b.time = times;
  const double height = mesh.height();
  const int i_right = mesh.nx() - 1;
  for (const auto& st : states) {
    if (st.f_face.size() != mesh.num_faces() || st.temperature.size() != mesh.num_cells())
      throw ShapeError("state does not match the mesh");
    double f = 0.0, e = 0.0, t = 0.0;
    for (int j = 0; j < mesh.ny(); ++j) {
      const std::size_t face = mesh.boundary_face(setup::Side::kRight, j);
      f += mesh.dy(j) * st.f_face[face];
      e += mesh.dy(j) * st.e_face[face];
      t += mesh.dy(j) * st.temperature[mesh.cell(i_right, j)];
    }
    b.f_r.push_back(f / height);
    b.e_r.push_back(e / height);
    b.t_r.push_back(t / height);
  }
  return b;
}

BreakoutSeries boundary_averages(const drivers::RunRecord& run) {
  std::vector<loqd::GreyState> states;
  std::vector<double> times;
  for (std::size_t n = 0; n < run.steps.size(); ++n) {
    states.push_back(run.steps[n].state);
    times.push_back(run.time.time(static_cast<int>(n) + 1));
  }
  return boundary_averages(run.mesh(), states, times);
}

Breakout breakout_time(const std::vector<double>& times, const std::vector<double>& values,
                       double threshold) {
  if (times.size() != values.size()) throw ShapeError("times and values differ in length");
  Breakout b;
  for (std::size_t n = 0; n < values.size(); ++n) {
    if (values[n] >= threshold) {
      b.reached = true;
      b.step = static_cast<int>(n);
      b.time = times[n];
      b.interpolated = times[n];
      if (n > 0 && values[n] > values[n - 1]) {
        const double w = (threshold - values[n - 1]) / (values[n] - values[n - 1]);
        b.interpolated = times[n - 1] + w * (times[n] - times[n - 1]);
      }
      return b;
    }
  }
  return b;
}

const std::vector<double>& xi_grid() {
  static const std::vector<double> g = {1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-14, 1e-16};
  return g;
}

const std::vector<double>& xi_grid_dmd() {
  static const std::vector<double> g = {1e-2,  1e-4,  1e-6,  1e-8, 1e-10,
                                        1e-12, 1e-14, 1e-16, 1e-18};
  return g;
}

std::vector<SingularValueEntry> singular_value_report(
    const std::vector<lowrank::SnapshotMatrix>& matrices) {
  std::vector<SingularValueEntry> out;
  for (const auto& m : matrices) {
    if (m.cols() < 4) throw ShapeError("matrix " + m.name + " needs at least 4 snapshots");
    SingularValueEntry e;
    e.name = m.name;
    e.rows = m.rows();
    e.cols = m.cols();
    e.sigma = lowrank::truncated_svd(m.data).sigma;
    const Eigen::MatrixXd centered = m.data.colwise() - m.data.rowwise().mean();
    e.sigma_centered = lowrank::truncated_svd(centered).sigma;
    e.sigma_history = lowrank::truncated_svd(m.data.leftCols(m.cols() - 1)).sigma;
    const Eigen::VectorXd last = m.data.col(m.cols() - 1);
    const Eigen::MatrixXd sub = m.data.leftCols(m.cols() - 2).colwise() - last;
    const Eigen::VectorXd sigma_sub = lowrank::truncated_svd(sub).sigma;
    const double s1 = e.sigma.size() > 0 ? e.sigma(0) : 0.0;
    for (Eigen::Index i = 0; i < e.sigma.size(); ++i)
      if (e.sigma(i) > 1e-14 * s1) ++e.significant;
    for (double xi : xi_grid()) e.pod_ranks.push_back(rank_or(e.sigma_centered, xi, 1));
    for (double xi : xi_grid_dmd()) {
      e.dmd_ranks.push_back(rank_or(e.sigma_history, xi, 0));
      e.dmde_ranks.push_back(rank_or(sigma_sub, xi, 0));
    }
    out.push_back(std::move(e));
  }
  return out;
}

void write_error_csv(std::ostream& out, const ErrorSeries& s) {
  out << "t,e_T,e_E\n" << std::setprecision(17);
  for (std::size_t n = 0; n < s.time.size(); ++n)
    out << s.time[n] << ',' << s.e_t[n] << ',' << s.e_e[n] << '\n';
}

void write_breakout_csv(std::ostream& out, const BreakoutSeries& s) {
  out << "t,F_R,E_R,T_R\n" << std::setprecision(17);
  for (std::size_t n = 0; n < s.time.size(); ++n)
    out << s.time[n] << ',' << s.f_r[n] << ',' << s.e_r[n] << ',' << s.t_r[n] << '\n';
}

void write_breakout_result(std::ostream& out, const std::string& quantity, double threshold,
                           const Breakout& b) {
  out << "quantity,threshold,step,t,t_interpolated\n" << std::setprecision(17);
  if (b.reached)
    out << quantity << ',' << threshold << ',' << b.step << ',' << b.time << ','
        << b.interpolated << '\n';
  else
    out << quantity << ',' << threshold << ",not reached,,\n";
}

void write_sigma_csv(std::ostream& out, const std::vector<SingularValueEntry>& report) {
  out << "matrix,index,sigma,sigma_centered,sigma_history\n" << std::setprecision(17);
  for (const auto& e : report) {
    for (Eigen::Index i = 0; i < e.sigma.size(); ++i) {
      out << e.name << ',' << i + 1 << ',' << e.sigma(i) << ',';
      if (i < e.sigma_centered.size()) out << e.sigma_centered(i);
      out << ',';
      if (i < e.sigma_history.size()) out << e.sigma_history(i);
      out << '\n';
    }
  }
}

void write_rank_csv(std::ostream& out, const std::vector<SingularValueEntry>& report) {
  out << "matrix,rows,cols,significant,method,xi,rank\n";
  for (const auto& e : report) {
    const auto emit = [&](const char* method, const std::vector<double>& grid,
                          const std::vector<int>& ranks) {
      for (std::size_t k = 0; k < grid.size(); ++k)
        out << e.name << ',' << e.rows << ',' << e.cols << ',' << e.significant << ',' << method
            << ',' << grid[k] << ',' << ranks[k] << '\n';
    };
    emit("pod", xi_grid(), e.pod_ranks);
    emit("dmd", xi_grid_dmd(), e.dmd_ranks);
    emit("dmd-e", xi_grid_dmd(), e.dmde_ranks);
  }
}

}  // namespace ddet::analysis
