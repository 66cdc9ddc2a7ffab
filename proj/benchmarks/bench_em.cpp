#include <benchmark/benchmark.h>

#include <map>
#include <tuple>

#include "vbcm/em.hpp"
#include "vbcm/metrics.hpp"
#include "vbcm/synth.hpp"

using namespace vbcm;

namespace {

struct World {
    GroundTruth gt;
    FeatureTable features;
    Dataset data;
};

const World& world(std::size_t sessions) {
    static std::map<std::size_t, World> cache;
    auto it = cache.find(sessions);
    if (it == cache.end()) {
        SimConfig cfg;
        cfg.n_sessions = sessions;
        World w;
        std::tie(w.gt, w.features) = generate_ground_truth(cfg, 1);
        w.data = simulate_sessions(w.gt, cfg, ModelKind::VUBM2, 2);
        it = cache.emplace(sessions, std::move(w)).first;
    }
    return it->second;
}

void BM_PosteriorClosedForm(benchmark::State& state) {
    double a = 0.3;
    for (auto _ : state) {
        const auto p = e_step_closed_form(a, 0.6, 0.4, false, ModelKind::VUBM2);
        benchmark::DoNotOptimize(p);
        a = a < 0.9 ? a + 1e-7 : 0.3;
    }
}
BENCHMARK(BM_PosteriorClosedForm);

void BM_EStep(benchmark::State& state) {
    const World& w = world(static_cast<std::size_t>(state.range(0)));
    EmConfig cfg = EmConfig::defaults_for(ModelKind::VUBM2);
    cfg.threads = static_cast<std::size_t>(state.range(1));
    const EmEngine engine(w.data, ModelKind::VUBM2, cfg);
    for (auto _ : state) benchmark::DoNotOptimize(engine.e_step());
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.data.impression_count()));
}
BENCHMARK(BM_EStep)->Args({10000, 1})->Args({100000, 1})->Args({100000, 4})->Unit(benchmark::kMillisecond);

void BM_EmIteration(benchmark::State& state) {
    const World& w = world(static_cast<std::size_t>(state.range(0)));
    EmConfig cfg = EmConfig::defaults_for(ModelKind::VUBM2);
    cfg.threads = 1;
    EmEngine engine(w.data, ModelKind::VUBM2, cfg);
    for (auto _ : state) engine.set_params(m_step(engine.e_step().stats, engine.params()).params);
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.data.impression_count()));
}
BENCHMARK(BM_EmIteration)->Arg(10000)->Arg(100000)->Unit(benchmark::kMillisecond);

void BM_Predictions(benchmark::State& state) {
    const World& w = world(100000);
    const ParamStore p = w.gt.as_params(ModelKind::VUBM2);
    for (auto _ : state) {
        const Predictions pred(w.data, p, 1);
        benchmark::DoNotOptimize(total_perplexity(pred));
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(w.data.impression_count()));
}
BENCHMARK(BM_Predictions)->Unit(benchmark::kMillisecond);

void BM_Simulate(benchmark::State& state) {
    SimConfig cfg;
    cfg.n_sessions = 10000;
    const auto [gt, features] = generate_ground_truth(cfg, 3);
    for (auto _ : state) benchmark::DoNotOptimize(simulate_sessions(gt, cfg, ModelKind::VUBM2, 4));
    state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_Simulate)->Unit(benchmark::kMillisecond);

}  // namespace
