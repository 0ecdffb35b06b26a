#include <benchmark/benchmark.h>

#include "prbm/rng.hpp"

namespace {

void BM_philox_pair(benchmark::State& state) {
    const prbm::rng::PathStream stream(42, 7);
    std::uint64_t step = 0;
    for (auto _ : state) {
        const auto np = stream.normals(step++, 0);
        benchmark::DoNotOptimize(np.z0 + np.z1);
    }
    state.SetItemsProcessed(state.iterations() * 2);
}
BENCHMARK(BM_philox_pair);

void BM_fill_normals_dim2(benchmark::State& state) {
    const prbm::rng::PathStream stream(42, 7);
    double buf[2];
    std::uint64_t step = 0;
    for (auto _ : state) {
        prbm::rng::fill_normals(stream, step++, buf, 2);
        benchmark::DoNotOptimize(buf[0] + buf[1]);
    }
    state.SetItemsProcessed(state.iterations() * 2);
}
BENCHMARK(BM_fill_normals_dim2);

}  // namespace
