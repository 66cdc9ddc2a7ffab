#pragma once

// Test-only reference implementations. They follow the generative story
// directly (enumerate every hidden state) instead of the closed forms the
// library uses, so agreement between the two is meaningful.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vbcm/clicklog.hpp"
#include "vbcm/mlp.hpp"
#include "vbcm/models.hpp"

namespace vbcm::testing {

/// P(click vector) for every click vector of a session's documents, summing
/// the joint of (E, E~, R) at each rank. exam for the UBM family is keyed by
/// the most recent sampled click.
inline std::map<std::vector<bool>, double> click_distribution(const ParamStore& p,
                                                              const std::string& query,
                                                              const std::vector<std::string>& docs) {
    std::map<std::vector<bool>, double> out;
    const VisionForm form = vision_form(p.kind());
    std::function<void(std::size_t, int, double, std::vector<bool>&)> rec =
        [&](std::size_t pos, int prev, double mass, std::vector<bool>& clicks) {
            if (mass == 0.0) return;
            if (pos == docs.size()) {
                out[clicks] += mass;
                return;
            }
            const int rank = static_cast<int>(pos) + 1;
            const double a = p.alpha(query, docs[pos]);
            const double g = p.gamma({rank, is_ubm_family(p.kind()) ? prev : 0});
            const double s = form == VisionForm::None ? 0.0 : p.sigma(docs[pos]);
            for (int e = 0; e <= 1; ++e) {
                for (int et = 0; et <= 1; ++et) {
                    for (int r = 0; r <= 1; ++r) {
                        double pe = e ? g : 1.0 - g;
                        double pet = 0.0;
                        switch (form) {
                            case VisionForm::None: pet = (et == e) ? 1.0 : 0.0; break;
                            case VisionForm::Complement: {
                                const double on = e ? 1.0 : s;
                                pet = et ? on : 1.0 - on;
                                break;
                            }
                            case VisionForm::Multiplicative: {
                                const double on = e ? s : 0.0;
                                pet = et ? on : 1.0 - on;
                                break;
                            }
                        }
                        const double pr = r ? a : 1.0 - a;
                        const bool c = et && r;
                        clicks.push_back(c);
                        rec(pos + 1, c ? rank : prev, mass * pe * pet * pr, clicks);
                        clicks.pop_back();
                    }
                }
            }
        };
    std::vector<bool> clicks;
    rec(0, 0, 1.0, clicks);
    return out;
}

/// Single-impression posteriors (rel, exam, vision, gate) by conditioning the
/// joint over (E, E~, R) on the observed click. Mirrors the field meanings of
/// PosteriorTriple without sharing any code with the library.
inline std::array<double, 4> posterior_by_enumeration(double a, double g, double s, bool clicked,
                                                      ModelKind kind) {
    const VisionForm form = vision_form(kind);
    double total = 0.0;
    double rel = 0.0;
    double exam = 0.0;
    double vision = 0.0;
    double gate = 0.0;
    for (int e = 0; e <= 1; ++e) {
        for (int et = 0; et <= 1; ++et) {
            for (int r = 0; r <= 1; ++r) {
                double m = (e ? g : 1.0 - g) * (r ? a : 1.0 - a);
                if (form == VisionForm::None) {
                    m *= (et == e) ? 1.0 : 0.0;
                } else {
                    const double on = form == VisionForm::Complement ? (e ? 1.0 : s) : (e ? s : 0.0);
                    m *= et ? on : 1.0 - on;
                }
                if ((et && r) != clicked) continue;
                total += m;
                if (r) rel += m;
                if (e) exam += m;
                if (form == VisionForm::Complement && !e) {
                    gate += m;
                    if (et) vision += m;
                }
                if (form == VisionForm::Multiplicative && e) {
                    gate += m;
                    if (et) vision += m;
                }
            }
        }
    }
    return {rel / total, exam / total, vision / total, gate / total};
}

inline std::vector<std::string> doc_ids(const Session& s) {
    std::vector<std::string> d;
    for (const auto& i : s.impressions) d.push_back(i.doc);
    return d;
}

/// Unconditional P(C_r = 1) by summing click vectors.
inline double enumerated_marginal(const ParamStore& p, const Session& s, int r) {
    double m = 0.0;
    for (const auto& [v, mass] : click_distribution(p, s.query, doc_ids(s))) {
        if (v[static_cast<std::size_t>(r - 1)]) m += mass;
    }
    return m;
}

/// P(C_r = 1 | observed C_<r) as a ratio of enumerated masses.
inline double enumerated_conditional(const ParamStore& p, const Session& s, int r) {
    const auto dist = click_distribution(p, s.query, doc_ids(s));
    const auto observed = s.clicks();
    double num = 0.0;
    double den = 0.0;
    for (const auto& [v, mass] : dist) {
        bool prefix = true;
        for (int k = 0; k + 1 < r; ++k) prefix = prefix && v[k] == observed[k];
        if (!prefix) continue;
        den += mass;
        if (v[static_cast<std::size_t>(r - 1)]) num += mass;
    }
    return num / den;
}

/// ln P(observed click vector), the exact session log-likelihood.
inline double enumerated_log_likelihood(const ParamStore& p, const Session& s) {
    return std::log(click_distribution(p, s.query, doc_ids(s)).at(s.clicks()));
}

/// Central differences of mlp_loss for every weight and bias, in layer order
/// (weights then bias per layer).
inline std::vector<double> finite_difference_gradient(Mlp m, std::span<const double> x, int label,
                                                      double h) {
    std::vector<double> g;
    for (auto& layer : m.layers()) {
        for (auto* vec : {&layer.weights, &layer.bias}) {
            for (double& w : *vec) {
                const double keep = w;
                w = keep + h;
                const double up = mlp_loss(m, x, label);
                w = keep - h;
                const double down = mlp_loss(m, x, label);
                w = keep;
                g.push_back((up - down) / (2.0 * h));
            }
        }
    }
    return g;
}

inline std::vector<double> flatten(const Mlp& m) {
    std::vector<double> v;
    for (const auto& layer : m.layers()) {
        v.insert(v.end(), layer.weights.begin(), layer.weights.end());
        v.insert(v.end(), layer.bias.begin(), layer.bias.end());
    }
    return v;
}

/// Hand-rolled generator for property tests.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    /// Strictly inside (0, 1), away from the edges.
    double prob() { return uniform(0.01, 0.99); }
    bool coin(double p = 0.5) { return uniform(0.0, 1.0) < p; }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    std::mt19937_64& engine() { return rng_; }

    FeatureVector features() {
        FeatureVector x{};
        for (double& v : x) v = normal();
        return x;
    }

    /// Sessions over queries q0..q{nq-1} and documents d0..d{nd-1}.
    Dataset dataset(int n_sessions, int nq, int nd, int max_len) {
        std::vector<Session> out;
        for (int i = 0; i < n_sessions; ++i) {
            Session s{"s" + std::to_string(i), "q" + std::to_string(integer(0, nq - 1)), {}};
            std::vector<int> pool(static_cast<std::size_t>(nd));
            for (int k = 0; k < nd; ++k) pool[static_cast<std::size_t>(k)] = k;
            std::shuffle(pool.begin(), pool.end(), rng_);
            const int len = integer(1, std::min(max_len, nd));
            for (int k = 0; k < len; ++k) {
                s.impressions.push_back({"d" + std::to_string(pool[static_cast<std::size_t>(k)]), coin(0.3)});
            }
            out.push_back(std::move(s));
        }
        return Dataset(std::move(out));
    }

    /// Random parameters covering every key a dataset of the given shape can touch.
    ParamStore params(ModelKind kind, int nq, int nd, int max_len) {
        ParamStore p(kind);
        for (int q = 0; q < nq; ++q) {
            for (int d = 0; d < nd; ++d) p.set_alpha("q" + std::to_string(q), "d" + std::to_string(d), prob());
        }
        for (int r = 1; r <= max_len; ++r) {
            if (is_ubm_family(kind)) {
                for (int prev = 0; prev < r; ++prev) p.set_gamma({r, prev}, prob());
            } else {
                p.set_gamma({r, 0}, prob());
            }
        }
        if (has_vision(kind)) {
            for (int d = 0; d < nd; ++d) p.set_sigma("d" + std::to_string(d), prob());
        }
        return p;
    }

private:
    std::mt19937_64 rng_;
};

/// |a - b| / max(|a|, |b|), with the scale floored at 1e-6 so gradients that
/// are zero in exact arithmetic compare absolutely.
inline double gradient_relative_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / scale;
}

}  // namespace vbcm::testing
