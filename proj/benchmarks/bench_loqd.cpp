#include <benchmark/benchmark.h>

#include <vector>

#include "ddet/config.hpp"
#include "ddet/loqd.hpp"

using namespace ddet;

namespace {

struct Fixture {
  setup::RunConfig cfg = setup::preset("fleck-cummings-2d");
  setup::SpatialMesh mesh = cfg.mesh();
  setup::FrequencyGrid grid = cfg.grid();
  setup::MaterialModel material = cfg.material();
  transport::ClosureRecord closure = transport::ClosureRecord::isotropic(cfg.nx, cfg.ny, grid.num_groups());
  loqd::MultigroupMoments prev = loqd::MultigroupMoments::equilibrium(mesh, grid, 0.3, cfg.constants);
  loqd::GroupMaterial mat =
      loqd::group_material(std::vector<double>(mesh.num_cells(), 0.3), grid, material);
  loqd::BoundaryInflow inflow = loqd::BoundaryInflow::from_source(
      mesh, setup::build_quadrature(cfg.quadrature_spec()),
      transport::BoundarySource::blackbody(cfg.hot_sides, cfg.t_inflow, grid, cfg.constants), cfg.constants);
};

void BM_MultigroupLoqd(benchmark::State& state) {
  Fixture f;
  loqd::MultigroupOptions opt;
  opt.threads = static_cast<int>(state.range(0));
  for (auto _ : state) {
    auto m = loqd::solve_multigroup_loqd(f.mesh, f.closure, f.mat, f.prev, f.inflow, f.cfg.dt, f.cfg.constants, opt);
    benchmark::DoNotOptimize(m.e_cell.data());
  }
}
BENCHMARK(BM_MultigroupLoqd)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_GreyProblem(benchmark::State& state) {
  Fixture f;
  const auto mg = loqd::solve_multigroup_loqd(f.mesh, f.closure, f.mat, f.prev, f.inflow, f.cfg.dt, f.cfg.constants);
  const auto co =
      loqd::compute_grey_coefficients(f.mesh, mg, f.mat, f.closure, f.prev, f.inflow, f.cfg.dt, f.cfg.constants);
  loqd::GreyState prev{f.prev.total_e_cell(), f.prev.total_e_face(), f.prev.total_f_face(),
                       std::vector<double>(f.mesh.num_cells(), 0.3)};
  loqd::GreyOptions opt;
  if (state.range(0)) {
    opt.grid = &f.grid;
    opt.material = &f.material;
  }
  for (auto _ : state) {
    auto g = loqd::solve_grey_problem(f.mesh, co, prev, prev, f.cfg.dt, f.material.cv, f.cfg.constants, opt);
    benchmark::DoNotOptimize(g.temperature.data());
  }
}
BENCHMARK(BM_GreyProblem)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
