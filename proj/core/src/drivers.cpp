#include "ddet/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>

#include "ddet/errors.hpp"

namespace ddet::drivers {

namespace {

using loqd::MultigroupMoments;
using setup::Side;

constexpr int kAndersonDepth = 8;

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double norm2_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

GreyState totals(const MultigroupMoments& mg, const std::vector<double>& temperature) {
  return {mg.total_e_cell(), mg.total_e_face(), mg.total_f_face(), temperature};
}

// Everything a time loop needs that does not change from step to step.
struct Setup {
  setup::SpatialMesh mesh;
  setup::FrequencyGrid grid;
  setup::AngularQuadrature quad;
  setup::MaterialModel material;
  transport::BoundarySource bc;
  loqd::BoundaryInflow inflow;

  explicit Setup(const setup::RunConfig& config)
      : mesh(config.mesh()),
        grid(config.grid()),
        quad(setup::build_quadrature(config.quadrature_spec())),
        material(config.material()),
        bc(transport::BoundarySource::blackbody(config.hot_sides, config.t_inflow, grid,
                                                config.constants)),
        inflow(loqd::BoundaryInflow::from_source(mesh, quad, bc, config.constants)) {}
};

struct LowOrderResult {
  MultigroupMoments mg;
  GreyState grey;
  int newton_iterations = 0;
  double grey_residual = 0.0;
  double mg_residual = 0.0;
};

// Multigroup LOQD, grey coefficients and grey Newton for fixed closures,
// with material data evaluated at `temperature`.
LowOrderResult low_order_step(const Setup& s, const setup::RunConfig& config,
                              const ClosureRecord& closure,
                              const std::vector<double>& temperature,
                              const MultigroupMoments& mg_prev, const GreyState& grey_prev) {
  LowOrderResult r;
  const loqd::GroupMaterial mat = loqd::group_material(temperature, s.grid, s.material);
  loqd::MultigroupOptions mopt;
  mopt.threads = config.threads;
  loqd::MultigroupDiagnostics mdiag;
  r.mg = loqd::solve_multigroup_loqd(s.mesh, closure, mat, mg_prev, s.inflow, config.dt,
                                     config.constants, mopt, &mdiag);
  r.mg_residual = mdiag.max_residual;
  const loqd::SpectrumAveraged coeffs = loqd::compute_grey_coefficients(
      s.mesh, r.mg, mat, closure, mg_prev, s.inflow, config.dt, config.constants);
  loqd::GreyOptions gopt;
  gopt.tol = config.tol.newton_tol;
  gopt.max_iterations = config.tol.newton_max;
  gopt.grid = &s.grid;
  gopt.material = &s.material;
  loqd::GreyDiagnostics gdiag;
  r.grey = loqd::solve_grey_problem(s.mesh, coeffs, grey_prev, totals(r.mg, temperature),
                                    config.dt, s.material.cv, config.constants, gopt, &gdiag);
  r.newton_iterations = gdiag.iterations;
  r.grey_residual = gdiag.history.empty() ? 0.0 : gdiag.history.back();
  return r;
}

std::size_t closure_violations(const ClosureRecord& closure) {
  const transport::ClosureBounds b = transport::check_closure_bounds(closure);
  return b.diagonal_out_of_range + b.boundary_out_of_range;
}

// Anderson mixing for the temperature fixed point T -> T(closure, kappa(T), B(T)).
// The plain iteration contracts slowly when the group spectrum of E lags T in
// optically thick cells.
class AndersonMixer {
 public:
  explicit AndersonMixer(int depth) : depth_(depth) {}

  std::vector<double> next(const std::vector<double>& x, const std::vector<double>& g) {
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.data(), n);
    Eigen::VectorXd f = gv - Eigen::Map<const Eigen::VectorXd>(x.data(), n);
    if (have_prev_) {
      df_.push_back(f - f_prev_);
      dg_.push_back(gv - g_prev_);
      if (static_cast<int>(df_.size()) > depth_) {
        df_.erase(df_.begin());
        dg_.erase(dg_.begin());
      }
    }
    f_prev_ = f;
    g_prev_ = gv;
    have_prev_ = true;
    if (df_.empty()) return g;

    const auto m = static_cast<Eigen::Index>(df_.size());
    Eigen::MatrixXd a(n, m);
    for (Eigen::Index j = 0; j < m; ++j) a.col(j) = df_[static_cast<std::size_t>(j)];
    const Eigen::VectorXd gamma = a.colPivHouseholderQr().solve(f);
    Eigen::VectorXd out = gv;
    for (Eigen::Index j = 0; j < m; ++j) out -= gamma(j) * dg_[static_cast<std::size_t>(j)];
    if (!out.allFinite() || out.minCoeff() <= 0.0) {
      reset();
      return g;
    }
    return {out.data(), out.data() + n};
  }

  void reset() {
    df_.clear();
    dg_.clear();
    have_prev_ = false;
  }

 private:
  int depth_;
  bool have_prev_ = false;
  Eigen::VectorXd f_prev_, g_prev_;
  std::vector<Eigen::VectorXd> df_, dg_;
};

RunRecord start_record(const std::string& kind, const setup::RunConfig& config, const Setup& s) {
  RunRecord rec;
  rec.kind = kind;
  rec.nx = config.nx;
  rec.ny = config.ny;
  rec.ng = s.grid.num_groups();
  rec.dx = s.mesh.dx();
  rec.dy = s.mesh.dy();
  rec.time = {config.t0, config.dt, config.num_steps};
  rec.steps.reserve(static_cast<std::size_t>(config.num_steps));
  return rec;
}

void log_step(std::ostream* log, const std::string& kind, int n, double t, const StepRecord& st) {
  if (!log) return;
  *log << kind << " step " << n << " t=" << t << " iterations=" << st.iterations
       << " newton=" << st.newton_iterations << " change=" << st.last_change
       << " energy_defect=" << st.energy_defect << '\n';
}

}  // namespace

void TimeGrid::validate() const {
  if (!(dt > 0.0)) throw ConfigError("time step must be positive");
  if (num_steps < 1) throw ConfigError("at least one time step is required");
}

setup::SpatialMesh RunRecord::mesh() const { return setup::SpatialMesh(dx, dy); }

double energy_defect(const setup::SpatialMesh& mesh, const GreyState& previous,
                     const GreyState& current, double dt, double heat_capacity,
                     double light_speed) {
  // Rounding level of a stored quantity after a linear solve and a few
  // hundred accumulations.
  constexpr double eps = 1e3 * std::numeric_limits<double>::epsilon();
  double sum = 0.0;
  double scale = 0.0;
  for (int j = 0; j < mesh.ny(); ++j) {
    for (int i = 0; i < mesh.nx(); ++i) {
      const std::size_t c = mesh.cell(i, j);
      const double area = mesh.cell_area(i, j);
      const double rad = area * (current.e_cell[c] - previous.e_cell[c]) / dt;
      const double mat = area * heat_capacity * (current.temperature[c] - previous.temperature[c]) / dt;
      sum += rad + mat;
      // Differences of stored energy carry rounding of order eps times the content.
      scale += std::abs(rad) + std::abs(mat) +
               eps * area *
                   (std::abs(current.e_cell[c]) + heat_capacity * std::abs(current.temperature[c])) / dt;
    }
  }
  for (Side side : setup::kSides) {
    const double out = (side == Side::kRight || side == Side::kTop) ? 1.0 : -1.0;
    for (int k = 0; k < mesh.side_length(side); ++k) {
      const double len = (side == Side::kLeft || side == Side::kRight) ? mesh.dy(k) : mesh.dx(k);
      const std::size_t f = mesh.boundary_face(side, k);
      const double leak = out * len * current.f_face[f];
      sum += leak;
      // Net flux is a difference of half-range fluxes of size c E / 4.
      scale += std::abs(leak) + eps * len * light_speed * std::abs(current.e_face[f]);
    }
  }
  return scale > 0.0 ? std::abs(sum) / scale : std::abs(sum);
}

RunRecord run_fom(const setup::RunConfig& config, const RunOptions& options) {
  config.validate();
  const Setup s(config);
  transport::TransportSolver solver(s.mesh, s.quad, s.grid, s.material, config.threads);
  solver.set_sweep_order(options.sweep_order);
  solver.set_empty_fallback(true);

  RunRecord rec = start_record("fom", config, s);
  const std::vector<double> t_init(s.mesh.num_cells(), config.t_initial);
  transport::IntensityField i_prev = solver.equilibrium_field(config.t_initial);
  MultigroupMoments mg_prev =
      MultigroupMoments::equilibrium(s.mesh, s.grid, config.t_initial, config.constants);
  GreyState grey_prev = totals(mg_prev, t_init);
  rec.initial = grey_prev;

  for (int n = 1; n <= config.num_steps; ++n) {
    StepRecord st;
    std::vector<double> t_iter = grey_prev.temperature;
    std::vector<double> e_iter = grey_prev.e_cell;
    std::vector<double> history;
    transport::IntensityField field;
    ClosureRecord closure;
    LowOrderResult lo;
    AndersonMixer mixer(kAndersonDepth);
    bool converged = false;
    for (int it = 1; it <= config.tol.outer_max; ++it) {
      transport::SweepStats ss;
      field = solver.sweep(t_iter, i_prev, config.dt, s.bc, &ss);
      closure = solver.compute_closures(field, s.bc, &st.closure_fallbacks);
      lo = low_order_step(s, config, closure, t_iter, mg_prev, grey_prev);
      st.negative_intensities = ss.negative_count;
      st.newton_iterations += lo.newton_iterations;

      const double dt_inf = max_abs_diff(lo.grey.temperature, t_iter);
      const double de_inf = max_abs_diff(lo.grey.e_cell, e_iter);
      const double t_norm = max_abs(lo.grey.temperature);
      const double e_norm = max_abs(lo.grey.e_cell);
      st.last_change = std::max(dt_inf / t_norm, de_inf / e_norm);
      history.push_back(st.last_change);
      e_iter = lo.grey.e_cell;
      st.iterations = it;
      if (dt_inf <= config.tol.outer_rel * t_norm + config.tol.outer_abs &&
          de_inf <= config.tol.outer_rel * e_norm + config.tol.outer_abs) {
        converged = true;
        break;
      }
      t_iter = mixer.next(t_iter, lo.grey.temperature);
    }
    if (!converged)
      throw SolverError("FOM outer iteration did not converge at step " + std::to_string(n),
                        history);

    st.state = lo.grey;
    st.grey_residual = lo.grey_residual;
    st.multigroup_residual = lo.mg_residual;
    st.energy_defect = energy_defect(s.mesh, grey_prev, lo.grey, config.dt, s.material.cv,
                                     config.constants.c);
    st.closure_violations = closure_violations(closure);
    log_step(options.log, "fom", n, rec.time.time(n), st);

    if (options.keep_closures) rec.closures.push_back(closure);
    if (options.keep_multigroup) rec.multigroup.push_back(lo.mg);
    rec.steps.push_back(st);
    i_prev = std::move(field);
    mg_prev = std::move(lo.mg);
    grey_prev = std::move(lo.grey);
  }
  return rec;
}

RunRecord run_rom(const setup::RunConfig& config, const ClosureProvider& closures,
                  const RunOptions& options) {
  config.validate();
  if (!closures) throw ConfigError("ROM run needs a closure provider");
  const Setup s(config);
  RunRecord rec = start_record("rom", config, s);
  const std::vector<double> t_init(s.mesh.num_cells(), config.t_initial);
  MultigroupMoments mg_prev =
      MultigroupMoments::equilibrium(s.mesh, s.grid, config.t_initial, config.constants);
  GreyState grey_prev = totals(mg_prev, t_init);
  rec.initial = grey_prev;

  for (int n = 1; n <= config.num_steps; ++n) {
    const ClosureRecord closure = closures(n);
    if (closure.nx != config.nx || closure.ny != config.ny || closure.ng != rec.ng)
      throw ShapeError("reconstructed closure layout does not match the configuration");
    for (const auto* v : {&closure.fxx_c, &closure.fyy_c, &closure.fxx_v, &closure.fxy_v,
                          &closure.fyy_h, &closure.fxy_h, &closure.boundary})
      for (double x : *v)
        if (!std::isfinite(x))
          throw DataError("reconstructed closure has non-finite values at step " +
                          std::to_string(n));
    closure.require_shape(config.nx, config.ny, rec.ng);

    StepRecord st;
    std::vector<double> t_iter = grey_prev.temperature;
    std::vector<double> e_iter = grey_prev.e_cell;
    std::vector<double> history;
    LowOrderResult lo;
    AndersonMixer mixer(kAndersonDepth);
    bool converged = false;
    for (int it = 1; it <= config.tol.rom_max; ++it) {
      lo = low_order_step(s, config, closure, t_iter, mg_prev, grey_prev);
      st.newton_iterations += lo.newton_iterations;
      const double dt2 = norm2_diff(lo.grey.temperature, t_iter);
      const double de2 = norm2_diff(lo.grey.e_cell, e_iter);
      const double t_norm = norm2(lo.grey.temperature);
      const double e_norm = norm2(lo.grey.e_cell);
      st.last_change = std::max(dt2 / t_norm, de2 / e_norm);
      history.push_back(st.last_change);
      e_iter = lo.grey.e_cell;
      st.iterations = it;
      if (dt2 <= config.tol.rom_eps1 * t_norm + config.tol.rom_eps2 &&
          de2 <= config.tol.rom_eps1 * e_norm + config.tol.rom_eps2) {
        converged = true;
        break;
      }
      t_iter = mixer.next(t_iter, lo.grey.temperature);
    }
    if (!converged)
      throw SolverError("ROM inner iteration did not converge at step " + std::to_string(n),
                        history);

    st.state = lo.grey;
    st.grey_residual = lo.grey_residual;
    st.multigroup_residual = lo.mg_residual;
    st.energy_defect = energy_defect(s.mesh, grey_prev, lo.grey, config.dt, s.material.cv,
                                     config.constants.c);
    st.closure_violations = closure_violations(closure);
    log_step(options.log, "rom", n, rec.time.time(n), st);

    if (options.keep_closures) rec.closures.push_back(closure);
    if (options.keep_multigroup) rec.multigroup.push_back(lo.mg);
    rec.steps.push_back(st);
    mg_prev = std::move(lo.mg);
    grey_prev = std::move(lo.grey);
  }
  return rec;
}

const std::array<std::string, kNumSnapshotMatrices>& snapshot_names() {
  static const std::array<std::string, kNumSnapshotMatrices> names = {
      "fxx_c", "fxx_v", "fyy_c", "fyy_h", "fxy_v", "fxy_h", "C"};
  return names;
}

std::array<Eigen::Index, kNumSnapshotMatrices> snapshot_rows(int nx, int ny, int ng) {
  const auto g = static_cast<Eigen::Index>(ng);
  const auto dc = static_cast<Eigen::Index>(nx) * ny;
  const auto dv = static_cast<Eigen::Index>(nx + 1) * ny;
  const auto dh = static_cast<Eigen::Index>(nx) * (ny + 1);
  const auto db = 2 * static_cast<Eigen::Index>(nx + ny);
  return {g * dc, g * dv, g * dc, g * dh, g * dv, g * dh, g * db};
}

namespace {

std::array<std::vector<double>*, kNumSnapshotMatrices> fields(ClosureRecord& c) {
  return {&c.fxx_c, &c.fxx_v, &c.fyy_c, &c.fyy_h, &c.fxy_v, &c.fxy_h, &c.boundary};
}

}  // namespace

std::array<Eigen::VectorXd, kNumSnapshotMatrices> stack(const ClosureRecord& closure) {
  ClosureRecord copy = closure;
  std::array<Eigen::VectorXd, kNumSnapshotMatrices> out;
  const auto f = fields(copy);
  for (std::size_t k = 0; k < kNumSnapshotMatrices; ++k)
    out[k] = Eigen::Map<const Eigen::VectorXd>(f[k]->data(), static_cast<Eigen::Index>(f[k]->size()));
  return out;
}

ClosureRecord unstack(const std::array<Eigen::VectorXd, kNumSnapshotMatrices>& columns, int nx,
                      int ny, int ng) {
  ClosureRecord c = ClosureRecord::zeros(nx, ny, ng);
  const auto rows = snapshot_rows(nx, ny, ng);
  const auto f = fields(c);
  for (std::size_t k = 0; k < kNumSnapshotMatrices; ++k) {
    if (columns[k].size() != rows[k])
      throw ShapeError("snapshot column " + snapshot_names()[k] + " has " +
                       std::to_string(columns[k].size()) + " rows, layout needs " +
                       std::to_string(rows[k]));
    f[k]->assign(columns[k].data(), columns[k].data() + columns[k].size());
  }
  return c;
}

std::vector<lowrank::SnapshotMatrix> record_snapshots(const RunRecord& run) {
  if (run.closures.size() != run.steps.size() || run.closures.empty())
    throw ShapeError("run record does not hold one closure per step");
  const auto rows = snapshot_rows(run.nx, run.ny, run.ng);
  const auto cols = static_cast<Eigen::Index>(run.closures.size());
  std::vector<lowrank::SnapshotMatrix> out(kNumSnapshotMatrices);
  for (std::size_t k = 0; k < kNumSnapshotMatrices; ++k) {
    auto& m = out[k];
    m.name = snapshot_names()[k];
    m.data.resize(rows[k], cols);
    m.nx = run.nx;
    m.ny = run.ny;
    m.ng = run.ng;
    m.t0 = run.time.t0;
    m.dt = run.time.dt;
    m.uniform = true;
  }
  for (Eigen::Index n = 0; n < cols; ++n) {
    const auto& cl = run.closures[static_cast<std::size_t>(n)];
    cl.require_shape(run.nx, run.ny, run.ng);
    const auto col = stack(cl);
    for (std::size_t k = 0; k < kNumSnapshotMatrices; ++k) out[k].data.col(n) = col[k];
  }
  return out;
}

ClosureProvider model_provider(std::vector<lowrank::CompressedModel> models, int nx, int ny,
                               int ng) {
  if (models.size() != kNumSnapshotMatrices)
    throw ShapeError("expected " + std::to_string(kNumSnapshotMatrices) + " models, got " +
                     std::to_string(models.size()));
  const auto rows = snapshot_rows(nx, ny, ng);
  for (std::size_t k = 0; k < kNumSnapshotMatrices; ++k)
    if (lowrank::model_rows(models[k]) != rows[k])
      throw ShapeError("model for " + snapshot_names()[k] + " has " +
                       std::to_string(lowrank::model_rows(models[k])) + " rows, layout needs " +
                       std::to_string(rows[k]));
  return [models = std::move(models), nx, ny, ng](int step) {
    std::array<Eigen::VectorXd, kNumSnapshotMatrices> cols;
    for (std::size_t k = 0; k < kNumSnapshotMatrices; ++k)
      cols[k] = lowrank::reconstruct(models[k], step - 1);
    return unstack(cols, nx, ny, ng);
  };
}

}  // namespace ddet::drivers
