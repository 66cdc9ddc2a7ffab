#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "vbcm/clicklog.hpp"
#include "vbcm/em.hpp"
#include "vbcm/mlp.hpp"
#include "vbcm/models.hpp"

namespace vbcm {

/// One sample per document: label 1 when its sigma is at least the mean
/// sigma over all given documents, else 0. Throws ClickLogError listing every
/// document that has no feature row.
std::vector<LabeledSample> make_regression_targets(const std::map<std::string, double>& sigma,
                                                   const FeatureTable& features);

/// Replaces the sigma M-step of regression-based EM.
class SigmaRegressor {
public:
    virtual ~SigmaRegressor() = default;

    /// Learns from the standard M-step sigma targets of one EM iteration.
    virtual void fit(const std::map<std::string, double>& targets, int iteration) = 0;
    /// New sigma for a document.
    [[nodiscard]] virtual double predict(std::string_view doc) const = 0;
};

/// Mean-threshold labels, MLP classifier warm-started across iterations,
/// sigma = positive-class probability.
class MlpSigmaRegressor final : public SigmaRegressor {
public:
    MlpSigmaRegressor(const FeatureTable& features, MlpTrainConfig cfg);

    void fit(const std::map<std::string, double>& targets, int iteration) override;
    [[nodiscard]] double predict(std::string_view doc) const override;

    [[nodiscard]] const Mlp& mlp() const noexcept { return mlp_; }

private:
    const FeatureTable& features_;
    MlpTrainConfig cfg_;
    Mlp mlp_;
};

/// Returns the last fitted targets unchanged; with it regression-based EM
/// reduces to standard EM.
class LookupSigmaRegressor final : public SigmaRegressor {
public:
    void fit(const std::map<std::string, double>& targets, int iteration) override;
    [[nodiscard]] double predict(std::string_view doc) const override;

private:
    std::map<std::string, double, std::less<>> targets_;
};

struct RegressionEmResult {
    ParamStore params;
    EmTrace trace;
};

/// Generic driver: E-step and alpha/gamma M-step as in standard EM, sigma
/// targets from the standard sigma M-step, then sigma_d = regressor.predict(d)
/// for every training document and every document in extra_docs.
RegressionEmResult run_regression_em(const Dataset& train, ModelKind kind, const EmConfig& cfg,
                                     SigmaRegressor& regressor,
                                     const std::vector<std::string>& extra_docs = {});

struct MlpRegressionEmResult {
    ParamStore params;
    Mlp mlp;
    EmTrace trace;
};

/// Regression-based EM with the MLP regressor. The returned store carries
/// sigma for every document in the feature table.
MlpRegressionEmResult run_regression_em(const Dataset& train, const FeatureTable& features,
                                        ModelKind kind, const EmConfig& cfg,
                                        const MlpTrainConfig& mlp_cfg);

}  // namespace vbcm
