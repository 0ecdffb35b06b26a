#include <benchmark/benchmark.h>

#include <cmath>

#include "prbm/estimate.hpp"
#include "prbm/rng.hpp"

namespace {

using namespace prbm;

void BM_km_slope(benchmark::State& state) {
    const std::size_t n = static_cast<std::size_t>(state.range(0));
    std::vector<Duration> data;
    data.reserve(n);
    const rng::PathStream stream(5, 1);
    for (std::size_t i = 0; i < n; ++i)
        data.push_back({std::pow(stream.uniform(i, 0), -1.0), i % 13 == 0});
    for (auto _ : state) {
        const auto est = survival_tail_slope(data, {2.0, 50.0}, 20, 50);
        benchmark::DoNotOptimize(est.slope);
    }
}
BENCHMARK(BM_km_slope)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_binned_tv(benchmark::State& state) {
    const rng::PathStream stream(5, 2);
    std::vector<XYSample> ref, sample;
    for (std::size_t i = 0; i < 200000; ++i)
        ref.push_back({-std::log(stream.uniform(i, 0)), stream.uniform(i, 1)});
    for (std::size_t i = 0; i < 10000; ++i)
        sample.push_back({-std::log(stream.uniform(i, 3)), stream.uniform(i, 4)});
    for (auto _ : state) {
        const auto tv = binned_tv_distance(ref, sample, 64, 16);
        benchmark::DoNotOptimize(tv.tv);
    }
    state.SetLabel("ref=200k sample=10k");
}
BENCHMARK(BM_binned_tv)->Unit(benchmark::kMillisecond);

}  // namespace
