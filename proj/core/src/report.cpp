#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "csv.hpp"
#include "vbcm/metrics.hpp"

namespace vbcm {

namespace {

struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void write(std::ostream& out, TableFormat fmt) const {
        if (fmt == TableFormat::Csv) {
            auto line = [&out](const std::vector<std::string>& cells) {
                for (std::size_t i = 0; i < cells.size(); ++i) {
                    if (i) out << ',';
                    out << csv::quote(cells[i]);
                }
                out << '\n';
            };
            line(header);
            for (const auto& r : rows) line(r);
            return;
        }
        auto line = [&out](const std::vector<std::string>& cells) {
            out << '|';
            for (const auto& c : cells) out << ' ' << c << " |";
            out << '\n';
        };
        line(header);
        out << '|';
        for (std::size_t i = 0; i < header.size(); ++i) out << (i == 0 ? " --- |" : " ---: |");
        out << '\n';
        for (const auto& r : rows) line(r);
    }
};

std::string fixed(double v, int digits = 4) {
    if (std::isnan(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string percent(double v) {
    if (std::isnan(v) || std::isinf(v)) return "";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%+.2f%%", v);
    return buf;
}

template <class F>
std::string improvement_cell(bool is_baseline, bool has_baseline, F&& compute) {
    if (!has_baseline) return "";
    if (is_baseline) return "-";
    try {
        return percent(compute());
    } catch (const std::exception&) {
        return "";
    }
}

std::string opt(const std::optional<double>& v) { return v ? fixed(*v) : ""; }

}  // namespace

void write_metric_table(std::ostream& out, const std::vector<NamedReport>& reports,
                        std::optional<std::size_t> baseline, TableFormat fmt) {
    const bool has_base = baseline.has_value() && *baseline < reports.size();
    Table t;
    t.header = {"model", "log_likelihood"};
    if (has_base) t.header.push_back("ll_improvement");
    t.header.push_back("perplexity");
    if (has_base) t.header.push_back("perplexity_improvement");
    t.header.push_back("clicked_perplexity");
    if (has_base) t.header.push_back("clicked_perplexity_improvement");
    t.header.push_back("mrr");
    if (has_base) t.header.push_back("mrr_improvement");

    for (std::size_t i = 0; i < reports.size(); ++i) {
        const MetricSet& m = reports[i].report.overall;
        const bool is_base = has_base && i == *baseline;
        const MetricSet* b = has_base ? &reports[*baseline].report.overall : nullptr;
        std::vector<std::string> row = {reports[i].name, fixed(m.avg_log_likelihood)};
        if (has_base) {
            row.push_back(improvement_cell(is_base, true, [&] {
                return ll_improvement(m.avg_log_likelihood, b->avg_log_likelihood);
            }));
        }
        row.push_back(fixed(m.total_perplexity));
        if (has_base) {
            row.push_back(improvement_cell(is_base, true, [&] {
                return perplexity_improvement(m.total_perplexity, b->total_perplexity);
            }));
        }
        row.push_back(opt(m.clicked_perplexity));
        if (has_base) {
            row.push_back(improvement_cell(is_base, m.clicked_perplexity && b->clicked_perplexity, [&] {
                return perplexity_improvement(*m.clicked_perplexity, *b->clicked_perplexity);
            }));
        }
        row.push_back(opt(m.mrr));
        if (has_base) {
            row.push_back(improvement_cell(is_base, m.mrr && b->mrr, [&] {
                return relative_improvement(*m.mrr, *b->mrr);
            }));
        }
        t.rows.push_back(std::move(row));
    }
    t.write(out, fmt);
}

void write_rank_table(std::ostream& out, const std::vector<NamedReport>& reports,
                      std::optional<std::size_t> baseline, int max_rank, TableFormat fmt) {
    const bool has_base = baseline.has_value() && *baseline < reports.size();
    Table t;
    t.header = {"rank"};
    for (const auto& r : reports) {
        t.header.push_back(r.name);
        if (has_base) t.header.push_back(r.name + " improvement");
    }
    for (int rank = 1; rank <= max_rank; ++rank) {
        std::vector<std::string> row = {std::to_string(rank)};
        bool any = false;
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const auto& per = reports[i].report.overall.perplexity_per_rank;
            auto it = per.find(rank);
            row.push_back(it == per.end() ? "" : fixed(it->second));
            any = any || it != per.end();
            if (has_base) {
                const auto& bper = reports[*baseline].report.overall.perplexity_per_rank;
                auto bit = bper.find(rank);
                const bool ok = it != per.end() && bit != bper.end();
                row.push_back(improvement_cell(i == *baseline, ok, [&] {
                    return perplexity_improvement(it->second, bit->second);
                }));
            }
        }
        if (any) t.rows.push_back(std::move(row));
    }
    t.write(out, fmt);
}

void write_bucket_table(std::ostream& out, const std::vector<NamedReport>& reports,
                        std::optional<std::size_t> baseline, TableFormat fmt) {
    const bool has_base = baseline.has_value() && *baseline < reports.size();
    Table t;
    t.header = {"query_frequency", "model", "sessions", "log_likelihood"};
    if (has_base) t.header.push_back("ll_improvement");
    t.header.push_back("perplexity");
    if (has_base) t.header.push_back("perplexity_improvement");
    t.header.push_back("mrr");
    if (has_base) t.header.push_back("mrr_improvement");

    auto find_bucket = [](const EvalReport& r, FrequencyBucket b) -> const MetricSet* {
        for (const auto& [bk, m] : r.buckets) {
            if (bk == b) return &m;
        }
        return nullptr;
    };

    for (FrequencyBucket b : kAllBuckets) {
        for (std::size_t i = 0; i < reports.size(); ++i) {
            const MetricSet* m = find_bucket(reports[i].report, b);
            if (m == nullptr) continue;
            const MetricSet* base = has_base ? find_bucket(reports[*baseline].report, b) : nullptr;
            const bool is_base = has_base && i == *baseline;
            std::vector<std::string> row = {std::string(bucket_label(b)), reports[i].name,
                                            std::to_string(m->sessions), fixed(m->avg_log_likelihood)};
            if (has_base) {
                row.push_back(improvement_cell(is_base, base != nullptr, [&] {
                    return ll_improvement(m->avg_log_likelihood, base->avg_log_likelihood);
                }));
            }
            row.push_back(fixed(m->total_perplexity));
            if (has_base) {
                row.push_back(improvement_cell(is_base, base != nullptr, [&] {
                    return perplexity_improvement(m->total_perplexity, base->total_perplexity);
                }));
            }
            row.push_back(opt(m->mrr));
            if (has_base) {
                row.push_back(improvement_cell(is_base, base != nullptr && m->mrr && base->mrr, [&] {
                    return relative_improvement(*m->mrr, *base->mrr);
                }));
            }
            t.rows.push_back(std::move(row));
        }
    }
    t.write(out, fmt);
}

}  // namespace vbcm
