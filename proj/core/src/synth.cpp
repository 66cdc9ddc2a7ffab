#include "vbcm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "vbcm/model_io.hpp"
#include "vbcm/parallel.hpp"

namespace vbcm {

namespace {

std::string padded(const char* prefix, std::size_t i, int width) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%0*zu", prefix, width, i);
    return buf;
}

int width_for(std::size_t n) {
    int w = 1;
    while (n >= 10) {
        n /= 10;
        ++w;
    }
    return std::max(w, 3);
}

double logistic(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

std::vector<double> zipf_weights(std::size_t n, double exponent) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
    return w;
}

}  // namespace

void SimConfig::validate() const {
    if (n_queries == 0 || docs_per_query == 0) throw std::invalid_argument("need queries and documents");
    if (min_len == 0 || min_len > max_len) throw std::invalid_argument("need 1 <= min_len <= max_len");
    if (min_len > docs_per_query) throw std::invalid_argument("min_len exceeds docs_per_query");
    if (!(alpha_lo >= 0.0 && alpha_lo <= alpha_hi && alpha_hi <= 1.0)) {
        throw std::invalid_argument("alpha range must satisfy 0 <= lo <= hi <= 1");
    }
    if (!(gamma_top > 0.0 && gamma_top <= 1.0) || gamma_decay < 0.0) {
        throw std::invalid_argument("need 0 < gamma_top <= 1 and gamma_decay >= 0");
    }
    if (query_zipf < 0.0 || doc_zipf < 0.0) throw std::invalid_argument("Zipf exponents must be >= 0");
    if (!std::isfinite(sigma_weight_norm) || !std::isfinite(sigma_bias)) {
        throw std::invalid_argument("sigma rule must be finite");
    }
}

double SigmaRule::operator()(const FeatureVector& x) const {
    double z = bias;
    for (std::size_t i = 0; i < kFeatureDim; ++i) z += weights[i] * x[i];
    return logistic(z);
}

ParamStore GroundTruth::as_params(ModelKind kind) const {
    ParamStore p(kind);
    for (const auto& [key, v] : alpha) p.set_alpha(key.first, key.second, v);
    for (const auto& [key, v] : gamma) {
        if (is_ubm_family(kind) || key.prev == 0) p.set_gamma(key, v);
    }
    if (has_vision(kind)) {
        for (const auto& [doc, v] : sigma) p.set_sigma(doc, v);
    }
    return p;
}

std::pair<GroundTruth, FeatureTable> generate_ground_truth(const SimConfig& cfg,
                                                           std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    GroundTruth gt;
    FeatureTable features;

    SigmaRule rule;
    rule.weights.resize(kFeatureDim);
    double norm = 0.0;
    for (double& w : rule.weights) {
        w = normal(rng);
        norm += w * w;
    }
    norm = std::sqrt(norm);
    for (double& w : rule.weights) w = w / norm * cfg.sigma_weight_norm;
    rule.bias = cfg.sigma_bias;

    const int qw = width_for(cfg.n_queries);
    const int dw = width_for(cfg.docs_per_query);
    const auto doc_weights = zipf_weights(cfg.docs_per_query, cfg.doc_zipf);
    gt.query_weights = zipf_weights(cfg.n_queries, cfg.query_zipf);
    for (std::size_t q = 0; q < cfg.n_queries; ++q) {
        const std::string query = padded("q", q, qw);
        gt.queries.push_back(query);
        auto& cands = gt.candidates[query];
        for (std::size_t j = 0; j < cfg.docs_per_query; ++j) {
            const std::string doc = query + padded("_d", j, dw);
            FeatureVector x{};
            for (double& v : x) v = normal(rng);
            features.insert(doc, x);
            gt.sigma[doc] = rule(x);
            gt.alpha[{query, doc}] = cfg.alpha_lo + (cfg.alpha_hi - cfg.alpha_lo) * unit(rng);
            cands.emplace_back(doc, doc_weights[j]);
        }
    }

    const std::size_t max_rank = std::min(cfg.max_len, cfg.docs_per_query);
    for (std::size_t r = 1; r <= max_rank; ++r) {
        for (std::size_t prev = 0; prev < r; ++prev) {
            const double base = cfg.gamma_top * std::exp(-cfg.gamma_decay * static_cast<double>(r - 1));
            const double distance =
                prev == 0 ? 1.0 : 0.6 + 0.4 * std::exp(-0.3 * static_cast<double>(r - prev - 1));
            const double jitter = 0.1 * (unit(rng) - 0.5);
            gt.gamma[{static_cast<int>(r), static_cast<int>(prev)}] =
                std::clamp(base * distance + jitter, 0.02, 0.98);
        }
    }
    gt.sigma_rule = std::move(rule);
    return {std::move(gt), std::move(features)};
}

Dataset simulate_sessions(const GroundTruth& gt, const SimConfig& cfg, ModelKind kind,
                          std::uint64_t seed, std::size_t threads) {
    cfg.validate();
    if (gt.queries.empty()) throw std::invalid_argument("ground truth has no queries");
    const VisionForm form = vision_form(kind);
    const bool ubm = is_ubm_family(kind);
    const std::size_t max_len = std::min(cfg.max_len, cfg.docs_per_query);
    const int sw = width_for(cfg.n_sessions);

    // Resolve candidate tables once; sessions only touch indices.
    struct Candidate {
        std::string doc;
        double weight;
        double alpha;
        double sigma;
    };
    std::vector<std::vector<Candidate>> cands(gt.queries.size());
    for (std::size_t q = 0; q < gt.queries.size(); ++q) {
        const std::string& query = gt.queries[q];
        for (const auto& [doc, w] : gt.candidates.at(query)) {
            const double s = form == VisionForm::None ? 0.0 : gt.sigma.at(doc);
            cands[q].push_back({doc, w, gt.alpha.at({query, doc}), s});
        }
    }

    std::vector<Session> sessions(cfg.n_sessions);
    parallel_for(cfg.n_sessions, threads, [&](std::size_t begin, std::size_t end) {
        std::vector<double> weights;
        std::vector<std::size_t> pool;
        for (std::size_t i = begin; i < end; ++i) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
            std::mt19937_64 rng(seq);
            std::uniform_real_distribution<double> unit(0.0, 1.0);

            std::discrete_distribution<std::size_t> pick_query(gt.query_weights.begin(),
                                                               gt.query_weights.end());
            const std::size_t q = pick_query(rng);
            const auto& cq = cands[q];
            const std::size_t hi = std::min(max_len, cq.size());
            std::uniform_int_distribution<std::size_t> pick_len(std::min(cfg.min_len, hi), hi);
            const std::size_t len = pick_len(rng);

            pool.resize(cq.size());
            for (std::size_t k = 0; k < cq.size(); ++k) pool[k] = k;
            Session s{padded("s", i, sw), gt.queries[q], {}};
            int prev = 0;
            for (std::size_t pos = 0; pos < len; ++pos) {
                weights.clear();
                for (std::size_t k : pool) weights.push_back(cq[k].weight);
                std::discrete_distribution<std::size_t> pick_doc(weights.begin(), weights.end());
                const std::size_t chosen = pick_doc(rng);
                const Candidate& c = cq[pool[chosen]];
                pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(chosen));

                const int rank = static_cast<int>(pos) + 1;
                const double g = gt.gamma.at({rank, ubm ? prev : 0});
                const bool e = unit(rng) < g;
                const bool v = unit(rng) < c.sigma;
                const bool rel = unit(rng) < c.alpha;
                bool et = e;
                if (form == VisionForm::Complement) et = e || v;
                if (form == VisionForm::Multiplicative) et = e && v;
                const bool click = et && rel;
                s.impressions.push_back({c.doc, click});
                if (click) prev = rank;
            }
            sessions[i] = std::move(s);
        }
    });
    return Dataset(std::move(sessions));
}

std::string ground_truth_to_json(const GroundTruth& gt, ModelKind kind) {
    ModelFile m{gt.as_params(kind), Estimator::Standard, std::nullopt};
    auto j = nlohmann::json::parse(model_to_json(m));
    if (gt.sigma_rule) {
        j["sigma_rule"] = {{"weights", gt.sigma_rule->weights}, {"bias", gt.sigma_rule->bias}};
    }
    return j.dump() + "\n";
}

}  // namespace vbcm
