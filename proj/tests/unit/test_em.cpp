#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "vbcm/em.hpp"
#include "vbcm/synth.hpp"

using namespace vbcm;
using doctest::Approx;

namespace {

Dataset one_impression(bool clicked) {
    return Dataset({Session{"s", "q", {{"d", clicked}}}});
}

EmConfig halves(int iters = 1) {
    EmConfig c;
    c.init_alpha = 0.5;
    c.init_gamma = 0.5;
    c.init_sigma = 0.5;
    c.max_iters = iters;
    c.threads = 1;
    return c;
}

void check_close(const PosteriorTriple& a, const PosteriorTriple& b, double tol) {
    CHECK(a.p_rel == Approx(b.p_rel).epsilon(tol));
    CHECK(a.p_exam == Approx(b.p_exam).epsilon(tol));
    CHECK(a.p_vision == Approx(b.p_vision).epsilon(tol));
    CHECK(a.p_gate == Approx(b.p_gate).epsilon(tol));
}

}  // namespace

TEST_CASE("closed-form posteriors at the hand-checked point") {
    const auto clicked = e_step_closed_form(0.5, 0.5, 0.5, true, ModelKind::VUBM2);
    CHECK(clicked.p_rel == 1.0);
    CHECK(clicked.p_vision == Approx(1.0 / 3.0).epsilon(1e-15));
    CHECK(clicked.p_exam == Approx(2.0 / 3.0).epsilon(1e-15));

    const auto skipped = e_step_closed_form(0.5, 0.5, 0.5, false, ModelKind::VUBM2);
    CHECK(skipped.p_vision == Approx(0.2).epsilon(1e-15));
    CHECK(skipped.p_gate == Approx(0.6).epsilon(1e-15));
    CHECK(skipped.p_rel == Approx(0.2).epsilon(1e-15));
    CHECK(skipped.p_exam == Approx(0.4).epsilon(1e-15));
}

TEST_CASE("sigma = 0 removes the vision path") {
    testing::Gen g(4);
    for (int i = 0; i < 200; ++i) {
        const double a = g.prob();
        const double gm = g.prob();
        CHECK(e_step_closed_form(a, gm, 0.0, true, ModelKind::VUBM2).p_vision == 0.0);
        for (bool c : {true, false}) {
            const auto v = e_step_enumerated(a, gm, 0.0, c, ModelKind::VUBM2);
            const auto u = e_step_enumerated(a, gm, 0.0, c, ModelKind::UBM);
            CHECK(v.p_rel == Approx(u.p_rel).epsilon(1e-14));
            CHECK(v.p_exam == Approx(u.p_exam).epsilon(1e-14));
        }
    }
}

TEST_CASE("certain click") {
    for (ModelKind k : {ModelKind::VUBM2, ModelKind::VPBM2, ModelKind::UBM}) {
        const auto p = e_step_enumerated(1.0, 1.0, 0.3, true, k);
        CHECK(p.p_rel == 1.0);
        CHECK(p.p_exam == 1.0);
        CHECK(p.p_vision == 0.0);
    }
}

TEST_CASE("closed form equals enumeration on random inputs for every kind") {
    testing::Gen g(99);
    for (ModelKind k : kAllModelKinds) {
        for (int i = 0; i < 1000; ++i) {
            const double a = g.uniform(1e-6, 1.0 - 1e-6);
            const double gm = g.uniform(1e-6, 1.0 - 1e-6);
            const double s = g.uniform(1e-6, 1.0 - 1e-6);
            const bool c = g.coin();
            check_close(e_step_closed_form(a, gm, s, c, k), e_step_enumerated(a, gm, s, c, k), 1e-12);
        }
    }
}

TEST_CASE("posteriors stay in [0, 1]") {
    testing::Gen g(5);
    for (ModelKind k : kAllModelKinds) {
        for (int i = 0; i < 500; ++i) {
            const auto p = e_step_closed_form(g.uniform(0, 1), g.uniform(0, 1), g.uniform(0, 1), false, k);
            for (double v : {p.p_rel, p.p_exam, p.p_vision, p.p_gate}) {
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
            }
            CHECK(p.p_vision <= p.p_gate + 1e-15);
        }
    }
}

TEST_CASE("impossible observations are reported") {
    CHECK_THROWS_AS((void)e_step_closed_form(0.0, 0.5, 0.5, true, ModelKind::VUBM2),
                    ImpossibleObservationError);
    CHECK_THROWS_AS((void)e_step_closed_form(0.5, 0.0, 0.0, true, ModelKind::VUBM2),
                    ImpossibleObservationError);
    CHECK_THROWS_AS((void)e_step_enumerated(0.5, 0.0, 0.0, true, ModelKind::VUBM2),
                    ImpossibleObservationError);
    CHECK_THROWS_AS((void)e_step_closed_form(1.0, 1.0, 0.5, false, ModelKind::UBM),
                    ImpossibleObservationError);
}

TEST_CASE("one M-step on a single impression") {
    SUBCASE("clicked: sigma -> 1, gamma -> 2/3") {
        const auto r = run_em(one_impression(true), ModelKind::VUBM2, halves());
        CHECK(r.params.sigma("d") == Approx(1.0).epsilon(1e-15));
        CHECK(r.params.gamma({1, 0}) == Approx(2.0 / 3.0).epsilon(1e-15));
        CHECK(r.params.alpha("q", "d") == 1.0);
    }
    SUBCASE("unclicked: sigma -> 1/3, alpha -> 0.2, gamma -> 0.4") {
        const auto r = run_em(one_impression(false), ModelKind::VUBM2, halves());
        CHECK(r.params.sigma("d") == Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(r.params.alpha("q", "d") == Approx(0.2).epsilon(1e-15));
        CHECK(r.params.gamma({1, 0}) == Approx(0.4).epsilon(1e-15));
    }
}

TEST_CASE("M-step ratios agree with enumerated posteriors") {
    const auto e = e_step_enumerated(0.5, 0.5, 0.5, false, ModelKind::VUBM2);
    const auto r = run_em(one_impression(false), ModelKind::VUBM2, halves());
    CHECK(r.params.sigma("d") == Approx(e.p_vision / e.p_gate).epsilon(1e-15));
}

TEST_CASE("zero sigma denominator keeps the previous value and is flagged") {
    SufficientStats stats(1, 1, 1);
    stats.add({0, 0, 0, false}, PosteriorTriple{0.3, 0.4, 0.0, 0.0});
    ParamVectors prev{{0.5}, {0.5}, {0.25}};
    const auto m = m_step(stats, prev);
    CHECK(m.params.sigma[0] == 0.25);
    REQUIRE(m.flagged_sigma.size() == 1);
    CHECK(m.flagged_sigma[0] == 0);
    CHECK(m.params.alpha[0] == Approx(0.3));
}

TEST_CASE("configuration defaults and validation") {
    const auto u = EmConfig::defaults_for(ModelKind::UBM);
    CHECK(u.init_alpha == 0.2);
    CHECK(u.init_gamma == 0.5);
    const auto p = EmConfig::defaults_for(ModelKind::VPBM2);
    CHECK(p.init_alpha == 0.5);
    CHECK(p.init_gamma == 0.5);
    CHECK(u.max_iters == 200);
    CHECK(u.convergence_tol == 1e-5);
    EmConfig bad;
    bad.convergence_tol = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    bad = EmConfig{};
    bad.init_alpha = 1.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    CHECK_THROWS((void)run_em(Dataset{}, ModelKind::UBM, EmConfig{}));
}

TEST_CASE("PBM-family models share gamma across previous clicks") {
    const Dataset d({Session{"a", "q", {{"x", true}, {"y", false}}},
                     Session{"b", "q", {{"x", false}, {"y", true}}}});
    const auto r = run_em(d, ModelKind::VPBM2, halves(3));
    CHECK(r.params.gammas().size() == 2);
    CHECK(r.params.gammas().contains({2, 0}));
    const auto u = run_em(d, ModelKind::VUBM2, halves(3));
    CHECK(u.params.gammas().contains({2, 1}));
    CHECK(u.params.gammas().contains({2, 0}));
}

TEST_CASE("vUBM-2 pinned at sigma = 0 follows UBM exactly") {
    testing::Gen g(21);
    const Dataset d = g.dataset(400, 4, 10, 6);
    EmConfig cfg = EmConfig::defaults_for(ModelKind::UBM);
    cfg.max_iters = 10;
    cfg.threads = 2;
    EmConfig pinned = cfg;
    pinned.init_sigma = 0.0;
    pinned.update_sigma = false;
    const auto u = run_em(d, ModelKind::UBM, cfg);
    const auto v = run_em(d, ModelKind::VUBM2, pinned);
    REQUIRE(u.trace.records.size() == v.trace.records.size());
    for (std::size_t i = 0; i < u.trace.records.size(); ++i) {
        CHECK(std::abs(u.trace.records[i].avg_ll - v.trace.records[i].avg_ll) <= 1e-12);
    }
    for (const auto& [k, a] : u.params.alphas()) CHECK(std::abs(v.params.alphas().at(k) - a) <= 1e-12);
    for (const auto& [k, gm] : u.params.gammas()) CHECK(std::abs(v.params.gammas().at(k) - gm) <= 1e-12);
}

TEST_CASE("training log-likelihood never decreases") {
    testing::Gen g(31);
    for (ModelKind k : kAllModelKinds) {
        for (int trial = 0; trial < 3; ++trial) {
            const Dataset d = g.dataset(300, 3, 8, 6);
            EmConfig cfg = EmConfig::defaults_for(k);
            cfg.max_iters = 30;
            cfg.threads = 1;
            const auto r = run_em(d, k, cfg);
            for (std::size_t i = 1; i < r.trace.records.size(); ++i) {
                CHECK(r.trace.records[i].avg_ll - r.trace.records[i - 1].avg_ll >= -1e-9);
            }
            CHECK(r.trace.final_avg_ll - r.trace.records.back().avg_ll >= -1e-9);
        }
    }
}

TEST_CASE("parameters stay in [0, 1] after every M-step") {
    testing::Gen g(32);
    const Dataset d = g.dataset(200, 3, 8, 6);
    for (ModelKind k : kAllModelKinds) {
        EmEngine engine(d, k, EmConfig::defaults_for(k));
        for (int it = 0; it < 15; ++it) {
            auto m = m_step(engine.e_step().stats, engine.params());
            for (const auto* v : {&m.params.alpha, &m.params.gamma, &m.params.sigma}) {
                for (double x : *v) {
                    CHECK(x >= 0.0);
                    CHECK(x <= 1.0);
                }
            }
            engine.set_params(std::move(m.params));
        }
    }
}

TEST_CASE("results do not depend on the thread count") {
    testing::Gen g(33);
    const Dataset d = g.dataset(500, 5, 10, 8);
    EmConfig cfg = EmConfig::defaults_for(ModelKind::VUBM2);
    cfg.max_iters = 20;
    cfg.threads = 1;
    const auto one = run_em(d, ModelKind::VUBM2, cfg);
    for (std::size_t t : {2u, 3u, 8u}) {
        cfg.threads = t;
        const auto many = run_em(d, ModelKind::VUBM2, cfg);
        CHECK(many.params == one.params);
        CHECK(many.trace.final_avg_ll == one.trace.final_avg_ll);
    }
}

TEST_CASE("trace CSV layout") {
    const auto r = run_em(one_impression(false), ModelKind::UBM, halves(2));
    std::ostringstream out;
    r.trace.write_csv(out);
    const std::string s = out.str();
    CHECK(s.rfind("iter,avg_ll,max_param_delta\n", 0) == 0);
    CHECK(std::count(s.begin(), s.end(), '\n') == 1 + static_cast<long>(r.trace.records.size()));
}

TEST_CASE("convergence stops before the iteration cap") {
    SimConfig sc;
    sc.n_queries = 5;
    sc.docs_per_query = 5;
    sc.n_sessions = 2000;
    auto [gt, f] = generate_ground_truth(sc, 1);
    const Dataset d = simulate_sessions(gt, sc, ModelKind::UBM, 2);
    EmConfig cfg = EmConfig::defaults_for(ModelKind::PBM);
    cfg.convergence_tol = 1e-3;
    const auto r = run_em(d, ModelKind::PBM, cfg);
    CHECK(r.trace.converged);
    CHECK(r.trace.iterations < cfg.max_iters);
    CHECK(r.trace.records.back().max_param_delta < 1e-3);
}
