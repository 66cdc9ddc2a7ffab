// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <string>
#include <tuple>

#include "oracles.hpp"
#include "vbcm/em.hpp"
#include "vbcm/metrics.hpp"
#include "vbcm/model_io.hpp"
#include "vbcm/regem.hpp"
#include "vbcm/synth.hpp"

using namespace vbcm;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
    bool pass;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

Outcome estep_oracle() {
    const auto t0 = Clock::now();
    testing::Gen g(101);
    double worst = 0.0;
    long cases = 0;
    for (int i = 0; i < 1000; ++i) {
        const double a = g.uniform(0.0, 1.0);
        const double gm = g.uniform(0.0, 1.0);
        const double s = g.uniform(0.0, 1.0);
        for (bool clicked : {true, false}) {
            for (ModelKind kind : kAllModelKinds) {
                const PosteriorTriple c = e_step_closed_form(a, gm, s, clicked, kind);
                const auto e = testing::posterior_by_enumeration(a, gm, s, clicked, kind);
                worst = std::max({worst, std::abs(c.p_rel - e[0]), std::abs(c.p_exam - e[1]),
                                  std::abs(c.p_vision - e[2]), std::abs(c.p_gate - e[3])});
                ++cases;
            }
        }
    }
    const double t = seconds_since(t0);
    return {worst <= 1e-12 && t < 5.0,
            fmt("%ld cases, max |closed - enumerated| = %.2e, %.2f s", cases, worst, t)};
}

Outcome degeneracy() {
    SimConfig sim;
    sim.n_sessions = 10000;
    const auto [gt, features] = generate_ground_truth(sim, 201);
    const Dataset d = simulate_sessions(gt, sim, ModelKind::VUBM2, 202);

    EmConfig cfg = EmConfig::defaults_for(ModelKind::UBM);
    cfg.threads = 1;
    EmConfig pinned = cfg;
    pinned.init_sigma = 0.0;
    pinned.update_sigma = false;
    EmEngine ubm(d, ModelKind::UBM, cfg);
    EmEngine vis(d, ModelKind::VUBM2, pinned);

    double worst = 0.0;
    for (int it = 0; it < 10; ++it) {
        ubm.set_params(m_step(ubm.e_step().stats, ubm.params()).params);
        vis.set_params(m_step(vis.e_step().stats, vis.params(), false).params);
        const auto& u = ubm.params();
        const auto& v = vis.params();
        if (u.alpha.size() != v.alpha.size() || u.gamma.size() != v.gamma.size()) {
            return {false, "parameter tables differ in shape"};
        }
        for (std::size_t i = 0; i < u.alpha.size(); ++i) worst = std::max(worst, std::abs(u.alpha[i] - v.alpha[i]));
        for (std::size_t i = 0; i < u.gamma.size(); ++i) worst = std::max(worst, std::abs(u.gamma[i] - v.gamma[i]));
    }
    return {worst <= 1e-12, fmt("10 iterations, max alpha/gamma difference %.2e", worst)};
}

Outcome monotonicity() {
    SimConfig sim;
    sim.n_sessions = 10000;
    const auto [gt, features] = generate_ground_truth(sim, 301);
    bool ok = true;
    std::string detail;
    for (ModelKind kind : kAllModelKinds) {
        const Dataset d = simulate_sessions(gt, sim, kind, 302);
        EmConfig cfg = EmConfig::defaults_for(kind);
        cfg.max_iters = 50;
        cfg.convergence_tol = 1e-300;  // run all 50 iterations
        const EmResult r = run_em(d, kind, cfg);
        double worst = 0.0;
        std::vector<double> ll;
        for (const auto& rec : r.trace.records) ll.push_back(rec.avg_ll);
        ll.push_back(r.trace.final_avg_ll);
        for (std::size_t i = 1; i < ll.size(); ++i) worst = std::min(worst, ll[i] - ll[i - 1]);
        ok = ok && worst >= -1e-9;
        detail += fmt("%s %.1e over %d iterations; ", std::string(model_kind_label(kind)).c_str(), worst,
                      r.trace.iterations);
    }
    return {ok, "largest per-iteration LL decrease: " + detail};
}

Outcome recovery() {
    const auto t0 = Clock::now();
    SimConfig sim;
    sim.n_sessions = 200000;
    const auto [gt, features] = generate_ground_truth(sim, 401);
    const Dataset d = simulate_sessions(gt, sim, ModelKind::VUBM2, 402);
    const EmResult r = run_em(d, ModelKind::VUBM2, EmConfig::defaults_for(ModelKind::VUBM2));

    std::map<ParamStore::AlphaKey, int> seen;
    for (const auto& s : d.sessions()) {
        for (const auto& i : s.impressions) ++seen[{s.query, i.doc}];
    }
    double alpha_err = 0.0;
    int n_alpha = 0;
    for (const auto& [k, n] : seen) {
        if (n < 200) continue;
        alpha_err += std::abs(r.params.alpha(k.first, k.second) - gt.alpha.at(k));
        ++n_alpha;
    }
    double gamma_err = 0.0;
    int n_gamma = 0;
    for (const auto& [k, v] : r.params.gammas()) {
        gamma_err += std::abs(v - gt.gamma.at(k));
        ++n_gamma;
    }
    alpha_err /= n_alpha;
    gamma_err /= n_gamma;
    const double t = seconds_since(t0);
    return {gamma_err < 0.02 && alpha_err < 0.05 && t < 300.0,
            fmt("MAE(gamma) %.4f over %d cells (< 0.02 %s), MAE(alpha) %.4f over %d pairs (< 0.05 %s), "
                "%d iterations, %.0f s",
                gamma_err, n_gamma, gamma_err < 0.02 ? "ok" : "missed", alpha_err, n_alpha,
                alpha_err < 0.05 ? "ok" : "missed", r.trace.iterations, t)};
}

Outcome sparsity() {
    SimConfig sim;
    sim.n_queries = 100;
    sim.docs_per_query = 30;
    sim.n_sessions = 100000;
    sim.doc_zipf = 1.5;
    sim.sigma_weight_norm = 2.0;
    const auto [gt, features] = generate_ground_truth(sim, 3);
    const Dataset all = simulate_sessions(gt, sim, ModelKind::VUBM2, 5);
    const auto [train, raw_test] = chronological_split(all, 0.75);
    const Dataset test = filter_test(raw_test, train);

    std::map<std::string, std::size_t> doc_count;
    for (const auto& s : train.sessions()) {
        for (const auto& i : s.impressions) ++doc_count[i.doc];
    }
    auto rare = [&](std::size_t si, std::size_t k) { return doc_count[test[si].impressions[k].doc] <= 5; };
    std::size_t n_rare = 0;
    for (std::size_t si = 0; si < test.size(); ++si) {
        for (std::size_t k = 0; k < test[si].size(); ++k) n_rare += rare(si, k);
    }

    const EmConfig cfg = EmConfig::defaults_for(ModelKind::VUBM2);
    const EmResult standard = run_em(train, ModelKind::VUBM2, cfg);
    const auto regression = run_regression_em(train, features, ModelKind::VUBM2, cfg, MlpTrainConfig{});
    const EmResult ubm = run_em(train, ModelKind::UBM, EmConfig::defaults_for(ModelKind::UBM));

    const Predictions ps(test, standard.params);
    const Predictions pr(test, regression.params);
    const Predictions pu(test, ubm.params);
    const double rare_std = perplexity_where(ps, rare);
    const double rare_reg = perplexity_where(pr, rare);
    const double tot_std = total_perplexity(ps);
    const double tot_reg = total_perplexity(pr);
    const double tot_ubm = total_perplexity(pu);
    return {rare_reg < rare_std && tot_std < tot_ubm && tot_reg < tot_ubm,
            fmt("rare docs (%zu impressions): regression %.4f vs standard %.4f; total perplexity "
                "regression %.5f, standard %.5f, UBM %.5f",
                n_rare, rare_reg, rare_std, tot_reg, tot_std, tot_ubm)};
}

Outcome gradient_check() {
    testing::Gen g(601);
    double worst = 0.0;
    for (int draw = 0; draw < 10; ++draw) {
        Mlp m = Mlp::glorot(600 + static_cast<std::uint64_t>(draw));
        for (auto& layer : m.layers()) {
            for (double& b : layer.bias) b = g.uniform(-0.5, 0.5);
        }
        const auto x = g.features();
        const int label = draw % 2;
        const auto analytic = testing::flatten(mlp_gradient(m, mlp_forward(m, x).cache, label));
        const auto numeric = testing::finite_difference_gradient(m, x, label, 1e-5);
        for (std::size_t i = 0; i < analytic.size(); ++i) {
            worst = std::max(worst, testing::gradient_relative_error(analytic[i], numeric[i]));
        }
    }
    return {worst < 1e-4, fmt("10 draws, max relative error %.2e", worst)};
}

Outcome metric_oracles() {
    testing::Gen g(701);
    const Dataset d = g.dataset(200, 3, 6, 6);
    ParamStore half(ModelKind::UBM);
    for (const auto& s : d.sessions()) {
        for (const auto& i : s.impressions) half.set_alpha(s.query, i.doc, 1.0);
    }
    for (int r = 1; r <= 6; ++r) {
        for (int prev = 0; prev < r; ++prev) half.set_gamma({r, prev}, 0.5);
    }
    const double ppl = total_perplexity(d, half);
    const double ll = log_likelihood(d, half);
    const double i1 = perplexity_improvement(1.388, 1.417);
    const double i2 = perplexity_improvement(1.381, 1.412);
    const double i3 = ll_improvement(-0.409, -0.433);

    ParamStore order(ModelKind::UBM);
    order.set_alpha("q", "a", 0.9);
    order.set_alpha("q", "b", 0.5);
    order.set_alpha("q", "c", 0.3);
    order.set_alpha("q", "z", 0.1);
    const Dataset fixture({Session{"s1", "q", {{"a", true}, {"b", false}, {"c", false}}},
                           Session{"s2", "q", {{"a", false}, {"b", true}, {"c", false}}},
                           Session{"s3", "q", {{"a", false}, {"b", false}, {"c", false}, {"z", true}}}});
    const double rr = mrr(fixture, order);

    const bool ok = std::abs(ppl - 2.0) <= 1e-12 && std::abs(ll - std::log(0.5)) <= 1e-12 &&
                    std::abs(i1 - 6.95) <= 0.01 && std::abs(i2 - 7.52) <= 0.01 &&
                    std::abs(i3 - 5.54) <= 0.01 && std::abs(rr - 0.5833333333333334) <= 1e-12;
    return {ok, fmt("perplexity %.15f, LL %.15f, improvements %+.4f%% %+.4f%% %+.4f%%, MRR %.15f", ppl, ll,
                    i1, i2, i3, rr)};
}

Outcome simulator_fidelity() {
    SimConfig sim;
    sim.n_queries = 5;
    sim.docs_per_query = 5;
    sim.max_len = 5;
    sim.n_sessions = 100000;
    const auto [gt, features] = generate_ground_truth(sim, 801);
    const Dataset d = simulate_sessions(gt, sim, ModelKind::VUBM2, 802);
    const ParamStore p = gt.as_params(ModelKind::VUBM2);

    std::map<std::tuple<std::string, std::string, int, int>, std::pair<std::size_t, std::size_t>> cells;
    for (const auto& s : d.sessions()) {
        int prev = 0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            const int r = static_cast<int>(k) + 1;
            auto& [n, c] = cells[{s.query, s.impressions[k].doc, r, prev}];
            ++n;
            c += s.impressions[k].clicked;
            if (s.impressions[k].clicked) prev = r;
        }
    }
    int checked = 0;
    int outside = 0;
    double worst = 0.0;
    for (const auto& [key, nc] : cells) {
        if (nc.first < 1000) continue;
        const auto& [q, doc, r, prev] = key;
        const double expected = conditional_click_prob(p, q, doc, {r, prev});
        const double n = static_cast<double>(nc.first);
        const double z = std::abs(static_cast<double>(nc.second) / n - expected) /
                         std::sqrt(expected * (1.0 - expected) / n);
        worst = std::max(worst, z);
        outside += z > 3.0;
        ++checked;
    }
    return {checked > 0 && outside == 0,
            fmt("%d cells with >= 1000 observations, %d outside 3 SE, max |z| %.2f", checked, outside, worst)};
}

Outcome determinism() {
    SimConfig sim;
    sim.n_queries = 20;
    sim.n_sessions = 10000;
    const auto [gt, features] = generate_ground_truth(sim, 901);
    const Dataset d = simulate_sessions(gt, sim, ModelKind::VUBM2, 902);

    EmConfig cfg = EmConfig::defaults_for(ModelKind::VUBM2);
    cfg.max_iters = 30;
    MlpTrainConfig mlp;
    mlp.epochs = 5;
    auto standard_file = [&] {
        return model_to_json({run_em(d, ModelKind::VUBM2, cfg).params, Estimator::Standard, {}});
    };
    auto regression_file = [&] {
        auto r = run_regression_em(d, features, ModelKind::VUBM2, cfg, mlp);
        return model_to_json({r.params, Estimator::Regression, r.mlp});
    };
    const bool bytes = standard_file() == standard_file() && regression_file() == regression_file();

    double worst = 0.0;
    EmConfig one = cfg;
    one.threads = 1;
    EmConfig four = cfg;
    four.threads = 4;
    for (ModelKind kind : {ModelKind::VUBM2, ModelKind::UBM, ModelKind::VPBM1}) {
        one.init_alpha = four.init_alpha = EmConfig::defaults_for(kind).init_alpha;
        const EmResult a = run_em(d, kind, one);
        const EmResult b = run_em(d, kind, four);
        for (std::size_t i = 0; i < std::min(a.trace.records.size(), b.trace.records.size()); ++i) {
            worst = std::max(worst, std::abs(a.trace.records[i].avg_ll - b.trace.records[i].avg_ll));
        }
        worst = std::max(worst, std::abs(a.trace.final_avg_ll - b.trace.final_avg_ll));
        if (a.trace.records.size() != b.trace.records.size()) worst = INFINITY;
    }
    return {bytes && worst <= 1e-9,
            fmt("repeat runs byte-identical: %s; max LL difference across 1/4 threads %.2e",
                bytes ? "yes" : "no", worst)};
}

}  // namespace

int main() {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"E-step closed form vs enumeration", estep_oracle},
        {"vUBM-2 with sigma = 0 tracks UBM", degeneracy},
        {"EM log-likelihood is non-decreasing", monotonicity},
        {"parameter recovery", recovery},
        {"regression EM helps sparse documents", sparsity},
        {"MLP gradient check", gradient_check},
        {"metric oracles", metric_oracles},
        {"simulator fidelity", simulator_fidelity},
        {"determinism across runs and threads", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o{false, ""};
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("criterion %zu: %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first,
                    o.detail.c_str());
        std::fflush(stdout);
    }
    std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
