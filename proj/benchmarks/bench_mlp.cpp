#include <benchmark/benchmark.h>

#include <random>

#include "vbcm/mlp.hpp"

using namespace vbcm;

namespace {

FeatureVector random_features(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    FeatureVector x{};
    for (double& v : x) v = n(rng);
    return x;
}

void BM_MlpForward(benchmark::State& state) {
    std::mt19937_64 rng(1);
    const Mlp m = Mlp::glorot(1);
    const FeatureVector x = random_features(rng);
    for (auto _ : state) benchmark::DoNotOptimize(mlp_predict(m, x));
}
BENCHMARK(BM_MlpForward);

void BM_MlpGradient(benchmark::State& state) {
    std::mt19937_64 rng(2);
    const Mlp m = Mlp::glorot(2);
    const FeatureVector x = random_features(rng);
    for (auto _ : state) benchmark::DoNotOptimize(mlp_gradient(m, mlp_forward(m, x).cache, 1));
}
BENCHMARK(BM_MlpGradient);

void BM_MlpTrainEpoch(benchmark::State& state) {
    std::mt19937_64 rng(3);
    std::vector<LabeledSample> data(static_cast<std::size_t>(state.range(0)));
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i].features = random_features(rng);
        data[i].label = static_cast<int>(i % 2);
    }
    MlpTrainConfig cfg;
    cfg.epochs = 1;
    const Mlp start = Mlp::glorot(3);
    for (auto _ : state) benchmark::DoNotOptimize(mlp_train(start, data, cfg));
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MlpTrainEpoch)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace
