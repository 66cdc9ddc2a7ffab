#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vbcm/clicklog.hpp"
#include "vbcm/models.hpp"

namespace vbcm {

struct SimConfig {
    std::size_t n_queries = 50;
    std::size_t docs_per_query = 10;
    std::size_t n_sessions = 10000;
    /// Session length is uniform on [min_len, min(max_len, docs_per_query)].
    std::size_t min_len = 3;
    std::size_t max_len = 8;
    /// Zipf exponents for picking a query and for a query's candidate documents.
    double query_zipf = 1.0;
    double doc_zipf = 1.0;
    double alpha_lo = 0.05;
    double alpha_hi = 0.95;
    /// gamma_{r,0} = gamma_top * exp(-gamma_decay * (r - 1)) before jitter.
    double gamma_top = 0.95;
    double gamma_decay = 0.35;
    /// sigma_d = logistic(sigma_weight_norm * (w . x_d) + sigma_bias), |w| = 1.
    double sigma_weight_norm = 1.0;
    double sigma_bias = 0.0;

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
};

struct SigmaRule {
    std::vector<double> weights;  // kFeatureDim entries
    double bias = 0.0;

    [[nodiscard]] double operator()(const FeatureVector& x) const;
};

/// Known parameters a simulator draws clicks from.
struct GroundTruth {
    std::map<ParamStore::AlphaKey, double> alpha;
    /// Position bias by (rank, previous click rank). PBM-family models read
    /// the prev == 0 column.
    std::map<GammaKey, double> gamma;
    std::map<std::string, double> sigma;
    std::optional<SigmaRule> sigma_rule;
    /// Candidate documents per query with their Zipf sampling weights.
    std::map<std::string, std::vector<std::pair<std::string, double>>> candidates;
    std::vector<std::string> queries;
    std::vector<double> query_weights;

    /// The ground truth viewed as a parameter store of the given kind.
    [[nodiscard]] ParamStore as_params(ModelKind kind) const;
};

/// alpha ~ U(alpha_lo, alpha_hi); gamma decreasing in rank and in the distance
/// to the previous click, with jitter; i.i.d. N(0, 1) features; sigma through
/// a logistic of a random unit-norm direction. Deterministic per seed.
std::pair<GroundTruth, FeatureTable> generate_ground_truth(const SimConfig& cfg,
                                                           std::uint64_t seed);

/// Sequential generative chain per session: E ~ Bern(gamma_{r r'}),
/// E~ = E or Bern(sigma) (-2) / E and Bern(sigma) (-1) / E, R ~ Bern(alpha),
/// C = E~ and R, with r' tracking the last sampled click. Session i draws from
/// its own generator seeded by (seed, i), so any session can be regenerated
/// independently and threads never change the output.
Dataset simulate_sessions(const GroundTruth& gt, const SimConfig& cfg, ModelKind kind,
                          std::uint64_t seed, std::size_t threads = 1);

/// Ground truth as a loadable model file of the given kind, plus the sigma rule.
std::string ground_truth_to_json(const GroundTruth& gt, ModelKind kind);

}  // namespace vbcm
