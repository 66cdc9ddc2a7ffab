#include "vbcm/clicklog.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "csv.hpp"
#include "json.hpp"

namespace vbcm {

using nlohmann::json;

ClickLogError::ClickLogError(const std::string& what, std::size_t line)
    : std::runtime_error(line == 0 ? what : "line " + std::to_string(line) + ": " + what),
      line_(line) {}

std::vector<bool> Session::clicks() const {
    std::vector<bool> out;
    out.reserve(impressions.size());
    for (const auto& imp : impressions) out.push_back(imp.clicked);
    return out;
}

void validate_session(const Session& s, std::size_t line) {
    if (s.impressions.empty()) {
        throw ClickLogError("empty session '" + s.id + "'", line);
    }
    std::unordered_set<std::string_view> seen;
    for (const auto& imp : s.impressions) {
        if (!seen.insert(imp.doc).second) {
            throw ClickLogError("document '" + imp.doc + "' repeated in session '" + s.id + "'",
                                line);
        }
    }
}

Dataset::Dataset(std::vector<Session> sessions) : sessions_(std::move(sessions)) {
    std::unordered_set<std::string_view> ids;
    for (std::size_t i = 0; i < sessions_.size(); ++i) {
        validate_session(sessions_[i]);
        if (!ids.insert(sessions_[i].id).second) {
            throw ClickLogError("duplicate session id '" + sessions_[i].id + "'");
        }
    }
}

std::size_t Dataset::impression_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : sessions_) n += s.size();
    return n;
}

std::map<std::string, std::vector<std::size_t>> Dataset::sessions_by_query() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < sessions_.size(); ++i) {
        out[sessions_[i].query].push_back(i);
    }
    return out;
}

void FeatureTable::insert(std::string doc, const FeatureVector& x) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw ClickLogError("non-finite feature for document '" + doc + "'");
        }
    }
    rows_.insert_or_assign(std::move(doc), x);
}

bool FeatureTable::contains(std::string_view doc) const { return rows_.find(doc) != rows_.end(); }

const FeatureVector& FeatureTable::at(std::string_view doc) const {
    auto it = rows_.find(doc);
    if (it == rows_.end()) {
        throw ClickLogError("no features for document '" + std::string(doc) + "'");
    }
    return it->second;
}

namespace {

Session session_from_json(const json& j, std::size_t line) {
    if (!j.is_object()) throw ClickLogError("record is not a JSON object", line);
    for (const char* key : {"sid", "query", "docs"}) {
        if (!j.contains(key)) throw ClickLogError(std::string("missing field '") + key + "'", line);
    }
    if (!j["sid"].is_string()) throw ClickLogError("'sid' must be a string", line);
    if (!j["query"].is_string()) throw ClickLogError("'query' must be a string", line);
    if (!j["docs"].is_array()) throw ClickLogError("'docs' must be an array", line);

    Session s;
    s.id = j["sid"].get<std::string>();
    s.query = j["query"].get<std::string>();
    for (const auto& d : j["docs"]) {
        if (!d.is_object() || !d.contains("id") || !d.contains("click")) {
            throw ClickLogError("each doc needs 'id' and 'click'", line);
        }
        if (!d["id"].is_string()) throw ClickLogError("doc 'id' must be a string", line);
        const auto& c = d["click"];
        if (!c.is_number_integer() || (c.get<int>() != 0 && c.get<int>() != 1)) {
            throw ClickLogError("doc 'click' must be 0 or 1", line);
        }
        s.impressions.push_back({d["id"].get<std::string>(), c.get<int>() == 1});
    }
    validate_session(s, line);
    return s;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ClickLogError("cannot open '" + path + "'");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ClickLogError("cannot write '" + path + "'");
    return out;
}

}  // namespace

Dataset parse_sessions(std::istream& in) {
    std::vector<Session> sessions;
    std::unordered_set<std::string> ids;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ClickLogError(std::string("JSON parse error: ") + e.what(), lineno);
        }
        Session s = session_from_json(j, lineno);
        if (!ids.insert(s.id).second) {
            throw ClickLogError("duplicate session id '" + s.id + "'", lineno);
        }
        sessions.push_back(std::move(s));
    }
    return Dataset(std::move(sessions));
}

Dataset load_sessions(const std::string& path) {
    auto in = open_in(path);
    return parse_sessions(in);
}

void write_sessions(std::ostream& out, const Dataset& d) {
    for (const auto& s : d.sessions()) {
        json docs = json::array();
        for (const auto& imp : s.impressions) {
            docs.push_back({{"id", imp.doc}, {"click", imp.clicked ? 1 : 0}});
        }
        json j = {{"sid", s.id}, {"query", s.query}, {"docs", std::move(docs)}};
        out << j.dump() << '\n';
    }
}

void save_sessions(const std::string& path, const Dataset& d) {
    auto out = open_out(path);
    write_sessions(out, d);
}

FeatureTable parse_features(std::istream& in) {
    FeatureTable table;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) return table;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = csv::split_record(line);
    if (header.size() != kFeatureDim + 1 || header[0] != "doc_id") {
        throw ClickLogError("feature header must be doc_id,f1,...,f64", lineno);
    }
    for (std::size_t i = 1; i <= kFeatureDim; ++i) {
        if (header[i] != "f" + std::to_string(i)) {
            throw ClickLogError("unexpected feature column '" + header[i] + "'", lineno);
        }
    }
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = csv::split_record(line);
        if (fields.size() != kFeatureDim + 1) {
            throw ClickLogError("expected " + std::to_string(kFeatureDim) + " feature columns, got " +
                                    std::to_string(fields.size() - 1),
                                lineno);
        }
        FeatureVector x{};
        for (std::size_t i = 0; i < kFeatureDim; ++i) {
            const std::string& f = fields[i + 1];
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), x[i]);
            if (ec != std::errc() || ptr != f.data() + f.size()) {
                throw ClickLogError("bad number '" + f + "'", lineno);
            }
        }
        if (table.contains(fields[0])) {
            throw ClickLogError("duplicate document '" + fields[0] + "'", lineno);
        }
        try {
            table.insert(fields[0], x);
        } catch (const ClickLogError& e) {
            throw ClickLogError(e.what(), lineno);
        }
    }
    return table;
}

FeatureTable load_features(const std::string& path) {
    auto in = open_in(path);
    return parse_features(in);
}

void write_features(std::ostream& out, const FeatureTable& t) {
    out << "doc_id";
    for (std::size_t i = 1; i <= kFeatureDim; ++i) out << ",f" << i;
    out << '\n';
    for (const auto& [doc, x] : t.rows()) {
        out << csv::quote(doc);
        for (double v : x) out << ',' << csv::format_double(v);
        out << '\n';
    }
}

void save_features(const std::string& path, const FeatureTable& t) {
    auto out = open_out(path);
    write_features(out, t);
}

std::pair<Dataset, Dataset> chronological_split(const Dataset& d, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw std::invalid_argument("train fraction must lie in (0, 1)");
    }
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(d.size())));
    const auto& all = d.sessions();
    std::vector<Session> train(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<Session> test(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    return {Dataset(std::move(train)), Dataset(std::move(test))};
}

Dataset filter_test(const Dataset& test, const Dataset& train) {
    std::unordered_set<std::string_view> queries;
    std::unordered_set<std::string_view> docs;
    for (const auto& s : train.sessions()) {
        queries.insert(s.query);
        for (const auto& imp : s.impressions) docs.insert(imp.doc);
    }
    std::vector<Session> kept;
    for (const auto& s : test.sessions()) {
        if (!queries.contains(s.query)) continue;
        Session f{s.id, s.query, {}};
        for (const auto& imp : s.impressions) {
            if (docs.contains(imp.doc)) f.impressions.push_back(imp);
        }
        if (!f.impressions.empty()) kept.push_back(std::move(f));
    }
    return Dataset(std::move(kept));
}

FrequencyBucket bucket_for_count(std::size_t count) {
    if (count < 10) return FrequencyBucket::k1To10;
    if (count < 30) return FrequencyBucket::k10To30;
    if (count < 100) return FrequencyBucket::k30To100;
    if (count < 500) return FrequencyBucket::k100To500;
    if (count < 2000) return FrequencyBucket::k500To2000;
    if (count < 10000) return FrequencyBucket::k2000To10000;
    return FrequencyBucket::k10000Plus;
}

std::string_view bucket_label(FrequencyBucket b) {
    switch (b) {
        case FrequencyBucket::k1To10: return "1-10";
        case FrequencyBucket::k10To30: return "10-30";
        case FrequencyBucket::k30To100: return "30-100";
        case FrequencyBucket::k100To500: return "100-500";
        case FrequencyBucket::k500To2000: return "500-2000";
        case FrequencyBucket::k2000To10000: return "2000-10000";
        case FrequencyBucket::k10000Plus: return ">=10000";
    }
    return "?";
}

QueryFrequencyIndex::QueryFrequencyIndex(const Dataset& train) {
    for (const auto& s : train.sessions()) {
        auto it = counts_.find(s.query);
        if (it == counts_.end()) {
            counts_.emplace(s.query, 1);
        } else {
            ++it->second;
        }
    }
}

std::size_t QueryFrequencyIndex::count(std::string_view query) const {
    auto it = counts_.find(query);
    return it == counts_.end() ? 0 : it->second;
}

std::optional<FrequencyBucket> QueryFrequencyIndex::bucket(std::string_view query) const {
    const std::size_t c = count(query);
    if (c == 0) return std::nullopt;
    return bucket_for_count(c);
}

}  // namespace vbcm
