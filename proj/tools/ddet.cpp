// ddet: full-order runs, snapshot compression, reduced-order runs and
// diagnostics over the resulting containers.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ddet/analysis.hpp"
#include "ddet/config.hpp"
#include "ddet/drivers.hpp"
#include "ddet/errors.hpp"
#include "ddet/lowrank.hpp"
#include "ddet/persistence.hpp"

namespace fs = std::filesystem;
using namespace ddet;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 2, kData = 3, kSolver = 4 };

struct ProblemArgs {
  std::string config;
  std::string preset;
  int threads = 1;
};

void add_problem_options(CLI::App* cmd, ProblemArgs& a) {
  auto* cfg = cmd->add_option("--config", a.config, "JSON configuration file");
  auto* pre = cmd->add_option("--preset", a.preset, "named configuration")
                  ->check(CLI::IsMember(setup::preset_names()));
  cfg->excludes(pre);
  cmd->add_option("--threads", a.threads, "worker threads")->check(CLI::PositiveNumber);
}

setup::RunConfig resolve_config(const ProblemArgs& a) {
  if (a.config.empty() && a.preset.empty())
    throw ConfigError("one of --config or --preset is required");
  setup::RunConfig c = a.config.empty() ? setup::preset(a.preset) : setup::load_config(a.config);
  c.threads = a.threads;
  c.validate();
  return c;
}

persistence::Layout layout_of(const setup::RunConfig& c) {
  persistence::Layout l;
  l.nx = c.nx;
  l.ny = c.ny;
  l.ng = c.grid().num_groups();
  l.num_steps = c.num_steps;
  l.dx = c.dx;
  l.dy = c.dy;
  l.t0 = c.t0;
  l.dt = c.dt;
  return l;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_csv(const fs::path& path) {
  if (path.has_parent_path()) ensure_dir(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

// --- fom ---------------------------------------------------------------------

int cmd_fom(const ProblemArgs& pa, const fs::path& out) {
  const setup::RunConfig config = resolve_config(pa);
  ensure_dir(out);
  drivers::RunOptions opt;
  opt.log = &std::cout;
  const drivers::RunRecord run = drivers::run_fom(config, opt);
  const std::vector<lowrank::SnapshotMatrix> snaps = drivers::record_snapshots(run);
  persistence::write_container(out / "run.ddet", persistence::run_to_container(run));
  persistence::write_container(out / "snapshots.ddet", persistence::snapshots_to_container(snaps));
  double defect = 0.0;
  for (const auto& st : run.steps) defect = std::max(defect, st.energy_defect);
  std::cout << "wrote " << (out / "run.ddet").string() << " and "
            << (out / "snapshots.ddet").string() << "\n";
  for (const auto& s : snaps)
    std::cout << "  " << s.name << ": " << s.rows() << " x " << s.cols() << "\n";
  std::cout << "max energy defect " << defect << "\n";
  return kOk;
}

// --- compress ------------------------------------------------------------------

int cmd_compress(const fs::path& in, const std::string& method, double xi, const fs::path& out) {
  const auto set = persistence::snapshots_from_container(persistence::read_container(in));
  ensure_dir(out);
  std::cout << "matrix,rows,cols,method,xi,rank\n";
  for (const auto& s : set) {
    lowrank::CompressedModel model;
    try {
      if (method == "pod")
        model = lowrank::pod_compress(s.data, xi);
      else if (method == "dmd")
        model = lowrank::dmd_compress(s.data, xi, lowrank::DmdVariant::kPlain, s.dt);
      else if (method == "dmd-e")
        model = lowrank::dmd_compress(s.data, xi, lowrank::DmdVariant::kEquilibriumSubtracted, s.dt);
      else
        model = lowrank::PlaybackModel{s.data};
    } catch (const Error& e) {
      throw DataError("compressing " + s.name + ": " + e.what());
    }
    persistence::write_container(
        out / (s.name + ".ddet"),
        persistence::model_to_container(s.name, model, persistence::layout_of(s)));
    std::cout << s.name << ',' << s.rows() << ',' << s.cols() << ',' << method << ',' << xi << ','
              << lowrank::model_rank(model) << '\n';
  }
  return kOk;
}

// --- rom -----------------------------------------------------------------------

int cmd_rom(const ProblemArgs& pa, const fs::path& models, const fs::path& out) {
  const setup::RunConfig config = resolve_config(pa);
  const persistence::Layout want = layout_of(config);
  std::vector<lowrank::CompressedModel> loaded;
  for (const auto& name : drivers::snapshot_names()) {
    const persistence::Container c = persistence::read_container(models / (name + ".ddet"));
    const persistence::Layout& have = c.layout;
    const bool windowed = c.kind != persistence::ContainerKind::kDmdModel;
    if (have.nx != want.nx || have.ny != want.ny || have.ng != want.ng || have.dt != want.dt ||
        have.t0 != want.t0 || (windowed && have.num_steps < want.num_steps))
      throw ShapeError("model " + name + " does not match the configuration\n  model:  " +
                       have.describe() + "\n  config: " + want.describe());
    loaded.push_back(persistence::model_from_container(c));
  }
  ensure_dir(out);
  drivers::RunOptions opt;
  opt.log = &std::cout;
  const drivers::RunRecord run = drivers::run_rom(
      config, drivers::model_provider(std::move(loaded), config.nx, config.ny, want.ng), opt);
  persistence::write_container(out / "run.ddet", persistence::run_to_container(run));
  std::cout << "wrote " << (out / "run.ddet").string() << "\n";
  return kOk;
}

// --- compare / breakout / svd-report -------------------------------------------

int cmd_compare(const fs::path& a, const fs::path& b, const std::string& out) {
  const auto run = persistence::run_from_container(persistence::read_container(a));
  const auto ref = persistence::run_from_container(persistence::read_container(b));
  const analysis::ErrorSeries s = analysis::relative_error_series(run, ref);
  if (out.empty()) {
    analysis::write_error_csv(std::cout, s);
  } else {
    std::ofstream f = open_csv(out);
    analysis::write_error_csv(f, s);
  }
  std::cerr << std::setprecision(6) << "max e_T " << s.max_t() << "  max e_E " << s.max_e() << "\n";
  return kOk;
}

int cmd_breakout(const fs::path& in, const std::string& quantity,
                 std::optional<double> threshold, double fraction, const std::string& out) {
  const auto run = persistence::run_from_container(persistence::read_container(in));
  const analysis::BreakoutSeries s = analysis::boundary_averages(run);
  const std::vector<double>& v = quantity == "E" ? s.e_r : quantity == "T" ? s.t_r : s.f_r;
  const double level =
      threshold ? *threshold : fraction * (v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()));
  const analysis::Breakout b = analysis::breakout_time(s.time, v, level);
  if (!out.empty()) {
    std::ofstream f = open_csv(out);
    analysis::write_breakout_csv(f, s);
  }
  analysis::write_breakout_result(std::cout, quantity, level, b);
  return kOk;
}

int cmd_svd_report(const fs::path& in, const fs::path& out) {
  const auto set = persistence::snapshots_from_container(persistence::read_container(in));
  const auto report = analysis::singular_value_report(set);
  ensure_dir(out);
  {
    std::ofstream f = open_csv(out / "sigma.csv");
    analysis::write_sigma_csv(f, report);
  }
  {
    std::ofstream f = open_csv(out / "ranks.csv");
    analysis::write_rank_csv(f, report);
  }
  std::cout << "matrix,rows,cols,significant,sigma_1,sigma_1_centered\n";
  for (const auto& e : report)
    std::cout << e.name << ',' << e.rows << ',' << e.cols << ',' << e.significant << ','
              << (e.sigma.size() ? e.sigma(0) : 0.0) << ','
              << (e.sigma_centered.size() ? e.sigma_centered(0) : 0.0) << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multigroup thermal radiative transfer with data-driven Eddington closures"};
  app.require_subcommand(1);

  ProblemArgs fom_args;
  std::string fom_out = "out";
  auto* fom = app.add_subcommand("fom", "full-order run; writes run.ddet and snapshots.ddet");
  add_problem_options(fom, fom_args);
  fom->add_option("--out", fom_out, "output directory");

  std::string cmp_in;
  std::string cmp_method = "pod";
  double cmp_xi = 1e-4;
  std::string cmp_out = "models";
  auto* compress = app.add_subcommand("compress", "one model container per snapshot matrix");
  compress->add_option("snapshots", cmp_in, "snapshot-set container")->required();
  compress->add_option("--method", cmp_method, "pod | dmd | dmd-e | playback")
      ->check(CLI::IsMember({"pod", "dmd", "dmd-e", "playback"}));
  compress->add_option("--xi", cmp_xi, "relative Frobenius truncation level in (0, 1]");
  compress->add_option("--out", cmp_out, "output directory");

  ProblemArgs rom_args;
  std::string rom_models = "models";
  std::string rom_out = "rom";
  auto* rom = app.add_subcommand("rom", "reduced-order run from model containers");
  add_problem_options(rom, rom_args);
  rom->add_option("--models", rom_models, "directory of model containers");
  rom->add_option("--out", rom_out, "output directory");

  std::string cmp_a, cmp_b, cmp_csv;
  auto* compare = app.add_subcommand("compare", "per-step relative errors of run A against run B");
  compare->add_option("run", cmp_a, "run-record container")->required();
  compare->add_option("reference", cmp_b, "reference run-record container")->required();
  compare->add_option("--out", cmp_csv, "CSV path (stdout when omitted)");

  std::string bo_in, bo_quantity = "F", bo_csv;
  double bo_threshold = 0.0, bo_fraction = 0.5;
  auto* breakout = app.add_subcommand("breakout", "right-boundary averages and breakout time");
  breakout->add_option("run", bo_in, "run-record container")->required();
  breakout->add_option("--quantity", bo_quantity, "F | E | T")
      ->check(CLI::IsMember({"F", "E", "T"}));
  auto* bo_thr = breakout->add_option("--threshold", bo_threshold, "absolute threshold");
  breakout->add_option("--fraction", bo_fraction, "threshold as a fraction of the series maximum")
      ->excludes(bo_thr);
  breakout->add_option("--out", bo_csv, "CSV path for the averaged series");

  std::string svd_in, svd_out = "svd";
  auto* svd = app.add_subcommand("svd-report", "singular values and rank tables");
  svd->add_option("snapshots", svd_in, "snapshot-set container")->required();
  svd->add_option("--out", svd_out, "output directory for sigma.csv and ranks.csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*fom) return cmd_fom(fom_args, fom_out);
    if (*compress) {
      if (!(cmp_xi > 0.0 && cmp_xi <= 1.0)) throw ConfigError("--xi must lie in (0, 1]");
      return cmd_compress(cmp_in, cmp_method, cmp_xi, cmp_out);
    }
    if (*rom) return cmd_rom(rom_args, rom_models, rom_out);
    if (*compare) return cmd_compare(cmp_a, cmp_b, cmp_csv);
    if (*breakout)
      return cmd_breakout(bo_in, bo_quantity,
                          bo_thr->count() ? std::optional<double>(bo_threshold) : std::nullopt,
                          bo_fraction, bo_csv);
    if (*svd) return cmd_svd_report(svd_in, svd_out);
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
    if (!e.history().empty()) {
      std::cerr << "  history:";
      for (double h : e.history()) std::cerr << ' ' << h;
      std::cerr << "\n";
    }
    return kSolver;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
