#include "vbcm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "vbcm/parallel.hpp"

namespace vbcm {

namespace {

double log2_term(double p, bool clicked) {
    const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
    return clicked ? std::log2(q) : std::log2(1.0 - q);
}

double perplexity_from(const CompensatedSum& log2_sum, std::size_t n) {
    return std::exp2(-log2_sum.value() / static_cast<double>(n));
}

}  // namespace

Predictions::Predictions(const Dataset& d, const ParamStore& params, std::size_t threads)
    : data_(&d), probs_(d.size()) {
    parallel_for(d.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) probs_[i] = conditional_click_probs(params, d[i]);
    });
}

double log_likelihood(const Predictions& pred) {
    const Dataset& d = pred.dataset();
    CompensatedSum ll;
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& q = pred.session(i);
        for (std::size_t k = 0; k < q.size(); ++k) {
            ll.add(click_log_term(q[k], d[i].impressions[k].clicked));
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("log-likelihood of an empty dataset");
    return ll.value() / static_cast<double>(n);
}

double log_likelihood(const Dataset& d, const ParamStore& params, std::size_t threads) {
    return log_likelihood(Predictions(d, params, threads));
}

double perplexity_where(const Predictions& pred, const ImpressionFilter& keep) {
    const Dataset& d = pred.dataset();
    CompensatedSum total;
    std::size_t n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& q = pred.session(i);
        for (std::size_t k = 0; k < q.size(); ++k) {
            if (!keep(i, k)) continue;
            total.add(log2_term(q[k], d[i].impressions[k].clicked));
            ++n;
        }
    }
    if (n == 0) throw std::invalid_argument("perplexity over an empty selection");
    return perplexity_from(total, n);
}

double perplexity_at_rank(const Predictions& pred, int rank) {
    if (rank < 1) throw std::invalid_argument("rank must be >= 1");
    const auto pos = static_cast<std::size_t>(rank - 1);
    try {
        return perplexity_where(pred, [pos](std::size_t, std::size_t k) { return k == pos; });
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("no session reaches rank " + std::to_string(rank));
    }
}

double perplexity_at_rank(const Dataset& d, const ParamStore& params, int rank,
                          std::size_t threads) {
    return perplexity_at_rank(Predictions(d, params, threads), rank);
}

namespace {

std::map<int, double> per_rank(const Predictions& pred, int max_rank) {
    if (max_rank < 1) throw std::invalid_argument("max_rank must be >= 1");
    const Dataset& d = pred.dataset();
    std::vector<CompensatedSum> sums(static_cast<std::size_t>(max_rank));
    std::vector<std::size_t> counts(static_cast<std::size_t>(max_rank), 0);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& q = pred.session(i);
        const std::size_t upto = std::min(q.size(), static_cast<std::size_t>(max_rank));
        for (std::size_t k = 0; k < upto; ++k) {
            sums[k].add(log2_term(q[k], d[i].impressions[k].clicked));
            ++counts[k];
        }
    }
    std::map<int, double> out;
    for (std::size_t k = 0; k < sums.size(); ++k) {
        if (counts[k] > 0) out[static_cast<int>(k) + 1] = perplexity_from(sums[k], counts[k]);
    }
    return out;
}

double mean_of(const std::map<int, double>& per) {
    if (per.empty()) return std::numeric_limits<double>::quiet_NaN();
    double s = 0.0;
    for (const auto& [r, p] : per) s += p;
    return s / static_cast<double>(per.size());
}

}  // namespace

double total_perplexity(const Predictions& pred, int max_rank) {
    return mean_of(per_rank(pred, max_rank));
}

double total_perplexity(const Dataset& d, const ParamStore& params, int max_rank,
                        std::size_t threads) {
    return total_perplexity(Predictions(d, params, threads), max_rank);
}

double clicked_perplexity(const Predictions& pred) {
    const Dataset& d = pred.dataset();
    try {
        return perplexity_where(
            pred, [&d](std::size_t i, std::size_t k) { return d[i].impressions[k].clicked; });
    } catch (const std::invalid_argument&) {
        throw std::invalid_argument("clicked perplexity needs at least one click");
    }
}

double clicked_perplexity(const Dataset& d, const ParamStore& params, std::size_t threads) {
    return clicked_perplexity(Predictions(d, params, threads));
}

double perplexity_improvement(double p_new, double p_old) {
    if (p_old == 1.0) throw std::domain_error("baseline perplexity of 1 leaves nothing to improve");
    return (p_old - p_new) / (p_old - 1.0) * 100.0;
}

double ll_improvement(double ll_new, double ll_old) {
    if (ll_old == 0.0) throw std::domain_error("baseline log-likelihood of 0 leaves nothing to improve");
    return (std::abs(ll_old) - std::abs(ll_new)) / std::abs(ll_old) * 100.0;
}

double relative_improvement(double value_new, double value_old) {
    if (value_old == 0.0) throw std::domain_error("relative improvement over 0");
    return (value_new - value_old) / value_old * 100.0;
}

double mrr(const Dataset& d, const ParamStore& params) {
    CompensatedSum total;
    std::size_t counted = 0;
    std::vector<std::pair<double, const std::string*>> ranked;
    for (const auto& s : d.sessions()) {
        auto first = std::find_if(s.impressions.begin(), s.impressions.end(),
                                  [](const Impression& i) { return i.clicked; });
        if (first == s.impressions.end()) continue;
        ranked.clear();
        for (const auto& imp : s.impressions) ranked.emplace_back(params.alpha(s.query, imp.doc), &imp.doc);
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return *a.second < *b.second;
        });
        for (std::size_t pos = 0; pos < ranked.size(); ++pos) {
            if (*ranked[pos].second == first->doc) {
                total.add(1.0 / static_cast<double>(pos + 1));
                break;
            }
        }
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("MRR needs at least one session with a click");
    return total.value() / static_cast<double>(counted);
}

MetricSet compute_metrics(const Dataset& d, const ParamStore& params, const EvalOptions& opts) {
    MetricSet m;
    m.sessions = d.size();
    m.impressions = d.impression_count();
    if (d.empty()) return m;
    const Predictions pred(d, params, opts.threads);
    m.avg_log_likelihood = log_likelihood(pred);
    m.perplexity_per_rank = per_rank(pred, opts.max_rank);
    m.total_perplexity = mean_of(m.perplexity_per_rank);
    const bool any_click = std::any_of(d.sessions().begin(), d.sessions().end(), [](const Session& s) {
        return std::any_of(s.impressions.begin(), s.impressions.end(),
                           [](const Impression& i) { return i.clicked; });
    });
    if (any_click) {
        m.clicked_perplexity = clicked_perplexity(pred);
        m.mrr = mrr(d, params);
    }
    return m;
}

EvalReport bucketed_report(const Dataset& d, const ParamStore& params,
                           const QueryFrequencyIndex& idx, const EvalOptions& opts) {
    EvalReport report;
    report.overall = compute_metrics(d, params, opts);
    std::map<FrequencyBucket, std::vector<Session>> groups;
    for (const auto& s : d.sessions()) {
        if (auto b = idx.bucket(s.query)) groups[*b].push_back(s);
    }
    for (auto& [bucket, sessions] : groups) {
        report.buckets.emplace_back(bucket,
                                    compute_metrics(Dataset(std::move(sessions)), params, opts));
    }
    return report;
}

}  // namespace vbcm
