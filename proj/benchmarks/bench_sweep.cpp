#include <benchmark/benchmark.h>

#include <vector>

#include "ddet/config.hpp"
#include "ddet/transport.hpp"

using namespace ddet;

namespace {

// One transport sweep plus closure evaluation on the desk and full meshes.
void BM_Sweep(benchmark::State& state) {
  setup::RunConfig cfg = setup::preset(state.range(0) ? "fleck-cummings-2d" : "fleck-cummings-desk");
  transport::TransportSolver s(cfg.mesh(), setup::build_quadrature(cfg.quadrature_spec()), cfg.grid(),
                               cfg.material(), static_cast<int>(state.range(1)));
  const std::vector<double> t(cfg.mesh().num_cells(), 0.3);
  const auto prev = s.equilibrium_field(0.3);
  const auto bc = transport::BoundarySource::blackbody(cfg.hot_sides, cfg.t_inflow, cfg.grid(), cfg.constants);
  for (auto _ : state) {
    auto out = s.sweep(t, prev, cfg.dt, bc);
    benchmark::DoNotOptimize(out.data().data());
  }
  state.counters["dofs"] = static_cast<double>(prev.size());
}
BENCHMARK(BM_Sweep)->Args({0, 1})->Args({1, 1})->Args({1, 4})->Unit(benchmark::kMillisecond);

void BM_Closures(benchmark::State& state) {
  const setup::RunConfig cfg = setup::preset("fleck-cummings-2d");
  transport::TransportSolver s(cfg.mesh(), setup::build_quadrature(cfg.quadrature_spec()), cfg.grid(),
                               cfg.material());
  const auto field = s.equilibrium_field(0.3);
  const auto bc = transport::BoundarySource::blackbody(cfg.hot_sides, cfg.t_inflow, cfg.grid(), cfg.constants);
  for (auto _ : state) {
    auto r = s.compute_closures(field, bc);
    benchmark::DoNotOptimize(r.fxx_c.data());
  }
}
BENCHMARK(BM_Closures)->Unit(benchmark::kMillisecond);

}  // namespace
