#include "vbcm/regem.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vbcm {

std::vector<LabeledSample> make_regression_targets(const std::map<std::string, double>& sigma,
                                                   const FeatureTable& features) {
    std::vector<std::string> missing;
    for (const auto& [doc, s] : sigma) {
        if (!(s >= 0.0 && s <= 1.0)) {
            throw std::domain_error("sigma target for '" + doc + "' outside [0, 1]");
        }
        if (!features.contains(doc)) missing.push_back(doc);
    }
    if (!missing.empty()) {
        std::ostringstream msg;
        msg << "missing features for " << missing.size() << " document(s):";
        for (const auto& d : missing) msg << ' ' << d;
        throw ClickLogError(msg.str());
    }
    if (sigma.empty()) return {};

    CompensatedSum total;
    double lo = 1.0;
    double hi = 0.0;
    for (const auto& [doc, s] : sigma) {
        total.add(s);
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    // The true mean lies in [lo, hi]; clamping keeps ties exact.
    const double mean = std::clamp(total.value() / static_cast<double>(sigma.size()), lo, hi);

    std::vector<LabeledSample> out;
    out.reserve(sigma.size());
    for (const auto& [doc, s] : sigma) {
        out.push_back({features.at(doc), s >= mean ? 1 : 0, doc});
    }
    return out;
}

MlpSigmaRegressor::MlpSigmaRegressor(const FeatureTable& features, MlpTrainConfig cfg)
    : features_(features), cfg_(cfg), mlp_(Mlp::glorot(cfg.seed)) {}

void MlpSigmaRegressor::fit(const std::map<std::string, double>& targets, int iteration) {
    const auto samples = make_regression_targets(targets, features_);
    if (samples.empty()) return;
    MlpTrainConfig c = cfg_;
    // Distinct, reproducible shuffle stream per EM iteration.
    c.seed = cfg_.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(iteration + 1));
    mlp_ = mlp_train(std::move(mlp_), samples, c);
}

double MlpSigmaRegressor::predict(std::string_view doc) const {
    return mlp_predict(mlp_, features_.at(doc));
}

void LookupSigmaRegressor::fit(const std::map<std::string, double>& targets, int /*iteration*/) {
    targets_.clear();
    for (const auto& [doc, s] : targets) targets_.emplace(doc, s);
}

double LookupSigmaRegressor::predict(std::string_view doc) const {
    auto it = targets_.find(doc);
    if (it == targets_.end()) throw UnknownKeyError("sigma", std::string(doc));
    return it->second;
}

RegressionEmResult run_regression_em(const Dataset& train, ModelKind kind, const EmConfig& cfg,
                                     SigmaRegressor& regressor,
                                     const std::vector<std::string>& extra_docs) {
    if (!has_vision(kind)) {
        throw std::invalid_argument("regression-based EM needs a vision-bias model, got " +
                                    std::string(model_kind_label(kind)));
    }
    EmEngine engine(train, kind, cfg);
    const auto& docs = engine.index().docs();
    EmTrace trace;
    bool fitted = false;

    for (int it = 1; it <= cfg.max_iters; ++it) {
        EStepResult e = engine.e_step();
        MStepResult m = m_step(e.stats, engine.params(), true);

        std::map<std::string, double> targets;
        for (std::size_t i = 0; i < docs.size(); ++i) targets.emplace(docs[i], m.params.sigma[i]);
        regressor.fit(targets, it);
        fitted = true;

        const ParamVectors& old = engine.params();
        double delta = 0.0;
        for (std::size_t i = 0; i < old.alpha.size(); ++i) {
            delta = std::max(delta, std::abs(m.params.alpha[i] - old.alpha[i]));
        }
        for (std::size_t i = 0; i < old.gamma.size(); ++i) {
            delta = std::max(delta, std::abs(m.params.gamma[i] - old.gamma[i]));
        }
        for (std::size_t i = 0; i < docs.size(); ++i) {
            const double s = std::clamp(regressor.predict(docs[i]), 0.0, 1.0);
            delta = std::max(delta, std::abs(s - old.sigma[i]));
            m.params.sigma[i] = s;
        }
        engine.set_params(std::move(m.params));
        trace.records.push_back({it, e.avg_ll, delta});
        trace.iterations = it;
        if (delta < cfg.convergence_tol) {
            trace.converged = true;
            break;
        }
    }
    trace.final_avg_ll = engine.average_log_likelihood();

    ParamStore store = engine.to_param_store();
    if (fitted) {
        for (const auto& doc : extra_docs) {
            if (!store.sigmas().contains(doc)) {
                store.set_sigma(doc, std::clamp(regressor.predict(doc), 0.0, 1.0));
            }
        }
    }
    return {std::move(store), std::move(trace)};
}

MlpRegressionEmResult run_regression_em(const Dataset& train, const FeatureTable& features,
                                        ModelKind kind, const EmConfig& cfg,
                                        const MlpTrainConfig& mlp_cfg) {
    std::vector<std::string> missing;
    for (const auto& s : train.sessions()) {
        for (const auto& imp : s.impressions) {
            if (!features.contains(imp.doc)) missing.push_back(imp.doc);
        }
    }
    if (!missing.empty()) {
        std::sort(missing.begin(), missing.end());
        missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
        std::ostringstream msg;
        msg << "missing features for " << missing.size() << " training document(s):";
        for (const auto& d : missing) msg << ' ' << d;
        throw ClickLogError(msg.str());
    }

    MlpSigmaRegressor regressor(features, mlp_cfg);
    std::vector<std::string> all_docs;
    all_docs.reserve(features.size());
    for (const auto& [doc, x] : features.rows()) all_docs.push_back(doc);
    auto result = run_regression_em(train, kind, cfg, regressor, all_docs);
    return {std::move(result.params), regressor.mlp(), std::move(result.trace)};
}

}  // namespace vbcm
