#include <benchmark/benchmark.h>

#include "prbm/fields.hpp"
#include "prbm/simulate.hpp"
#include "stepper.hpp"

namespace {

using namespace prbm;

Model make_model(double beta) {
    return Model(DomainGeometry(1, BoundaryFunction::power_blend(1.0, beta, 1.0)),
                 CovarianceField::constant_diagonal(1.0, 1.0), ReflectionField::unit_normal());
}

// wide expanding tube: reflections are rare, the anchored membership test
// carries the loop
void BM_step_wide(benchmark::State& state) {
    const Model m = make_model(0.1);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1e12;
    detail::Stepper st(m, cfg, Point{20.0, 0.0}, 1);
    for (auto _ : state) {
        st.advance();
        benchmark::DoNotOptimize(st.x());
    }
    state.SetItemsProcessed(state.iterations());
    state.counters["reflect_frac"] =
        static_cast<double>(st.diagnostics().reflections) / std::max<std::uint64_t>(1, st.steps());
}
BENCHMARK(BM_step_wide);

// narrowing tube: at moderate x nearly every step touches the wall
void BM_step_narrow(benchmark::State& state) {
    const Model m = make_model(-1.2);
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1e12;
    detail::Stepper st(m, cfg, Point{2.0, 0.0}, 1);
    for (auto _ : state) {
        st.advance();
        benchmark::DoNotOptimize(st.x());
    }
    state.SetItemsProcessed(state.iterations());
    state.counters["reflect_frac"] =
        static_cast<double>(st.diagnostics().reflections) / std::max<std::uint64_t>(1, st.steps());
}
BENCHMARK(BM_step_narrow);

void BM_bessel_step(benchmark::State& state) {
    SimConfig cfg;
    cfg.dt = 1e-3;
    cfg.horizon = 1e12;
    const rng::PathStream stream(7, 3);
    double x = 5.0;
    std::uint64_t n = 0;
    const double sq = std::sqrt(cfg.dt);
    for (auto _ : state) {
        x += 0.05 / x * cfg.dt + sq * stream.normals(n++, 0).z0;
        if (x < sq / 10.0) x = sq / 10.0;
        benchmark::DoNotOptimize(x);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_bessel_step);

}  // namespace
