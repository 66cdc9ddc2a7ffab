#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vbcm/clicklog.hpp"
#include "vbcm/models.hpp"

namespace vbcm {

/// Per-impression click predictions q = P(C_r = 1 | observed C_<r) for a
/// dataset, computed once and shared by every metric below.
class Predictions {
public:
    /// Sessions are evaluated in parallel; results are stored per session so
    /// later reductions run in dataset order. Throws UnknownKeyError if the
    /// store lacks a parameter the data needs.
    Predictions(const Dataset& d, const ParamStore& params, std::size_t threads = 0);

    [[nodiscard]] const Dataset& dataset() const noexcept { return *data_; }
    [[nodiscard]] const std::vector<double>& session(std::size_t i) const { return probs_[i]; }

private:
    const Dataset* data_;
    std::vector<std::vector<double>> probs_;
};

/// Impression selector: (session index, 0-based position) -> keep?
using ImpressionFilter = std::function<bool(std::size_t, std::size_t)>;

/// Average per-impression natural-log likelihood. 0 for a perfect model.
double log_likelihood(const Predictions& pred);
double log_likelihood(const Dataset& d, const ParamStore& params, std::size_t threads = 0);

/// 2^(-mean log2 likelihood) over sessions that reach rank r.
/// Throws std::invalid_argument when no session has rank r.
double perplexity_at_rank(const Predictions& pred, int rank);
double perplexity_at_rank(const Dataset& d, const ParamStore& params, int rank,
                          std::size_t threads = 0);

/// Mean of perplexity_at_rank over ranks 1..max_rank that have data
/// (NaN if none do).
double total_perplexity(const Predictions& pred, int max_rank = 10);
double total_perplexity(const Dataset& d, const ParamStore& params, int max_rank = 10,
                        std::size_t threads = 0);

/// Perplexity over clicked impressions only. Throws if there are none.
double clicked_perplexity(const Predictions& pred);
double clicked_perplexity(const Dataset& d, const ParamStore& params, std::size_t threads = 0);

/// Perplexity over the impressions a filter keeps. Throws if it keeps none.
double perplexity_where(const Predictions& pred, const ImpressionFilter& keep);

/// (p_old - p_new) / (p_old - 1) * 100. Throws std::domain_error when p_old == 1.
double perplexity_improvement(double p_new, double p_old);
/// (|ll_old| - |ll_new|) / |ll_old| * 100. Throws std::domain_error when ll_old == 0.
double ll_improvement(double ll_new, double ll_old);
/// (new - old) / old * 100, for higher-is-better metrics such as MRR.
double relative_improvement(double value_new, double value_old);

/// Sessions are re-ranked by alpha descending (ties: document id ascending);
/// each clicked session contributes 1 / (position of its first clicked doc,
/// first in display order).
/// Sessions without clicks are skipped; throws if all are.
double mrr(const Dataset& d, const ParamStore& params);

struct MetricSet {
    std::size_t sessions = 0;
    std::size_t impressions = 0;
    double avg_log_likelihood = 0.0;
    std::map<int, double> perplexity_per_rank;  // ranks 1..max_rank with data
    double total_perplexity = 0.0;
    std::optional<double> clicked_perplexity;   // absent without clicks
    std::optional<double> mrr;                  // absent without clicks
};

struct EvalReport {
    MetricSet overall;
    /// Populated buckets only, in bucket order.
    std::vector<std::pair<FrequencyBucket, MetricSet>> buckets;
};

struct EvalOptions {
    int max_rank = 10;
    std::size_t threads = 0;
};

MetricSet compute_metrics(const Dataset& d, const ParamStore& params,
                          const EvalOptions& opts = {});

/// Overall metrics plus one MetricSet per populated query-frequency bucket.
EvalReport bucketed_report(const Dataset& d, const ParamStore& params,
                           const QueryFrequencyIndex& idx, const EvalOptions& opts = {});

// ---- tabular export ------------------------------------------------------

enum class TableFormat { Csv, Markdown };

struct NamedReport {
    std::string name;
    EvalReport report;
};

/// Model x metric, with improvement columns against reports[*baseline].
void write_metric_table(std::ostream& out, const std::vector<NamedReport>& reports,
                        std::optional<std::size_t> baseline, TableFormat fmt);
/// Model x rank perplexity, ranks 1..max_rank.
void write_rank_table(std::ostream& out, const std::vector<NamedReport>& reports,
                      std::optional<std::size_t> baseline, int max_rank, TableFormat fmt);
/// Model x query-frequency bucket: log-likelihood, perplexity and MRR.
void write_bucket_table(std::ostream& out, const std::vector<NamedReport>& reports,
                        std::optional<std::size_t> baseline, TableFormat fmt);

}  // namespace vbcm
