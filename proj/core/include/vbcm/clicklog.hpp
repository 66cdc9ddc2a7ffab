#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vbcm {

inline constexpr std::size_t kFeatureDim = 64;

using FeatureVector = std::array<double, kFeatureDim>;

/// Raised for malformed or invariant-violating click logs and feature tables.
/// line() is 1-based; 0 when the error is not tied to a line.
class ClickLogError : public std::runtime_error {
public:
    ClickLogError(const std::string& what, std::size_t line = 0);
    [[nodiscard]] std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

struct Impression {
    std::string doc;
    bool clicked = false;

    friend bool operator==(const Impression&, const Impression&) = default;
};

/// One query issuance. Rank of impressions[i] is i + 1.
struct Session {
    std::string id;
    std::string query;
    std::vector<Impression> impressions;

    [[nodiscard]] std::size_t size() const noexcept { return impressions.size(); }
    [[nodiscard]] std::vector<bool> clicks() const;

    friend bool operator==(const Session&, const Session&) = default;
};

/// Throws ClickLogError if the session is empty or repeats a document.
void validate_session(const Session& s, std::size_t line = 0);

/// Ordered sessions; order is chronological.
class Dataset {
public:
    Dataset() = default;
    /// Validates every session and checks session ids are unique.
    explicit Dataset(std::vector<Session> sessions);

    [[nodiscard]] const std::vector<Session>& sessions() const noexcept { return sessions_; }
    [[nodiscard]] std::size_t size() const noexcept { return sessions_.size(); }
    [[nodiscard]] bool empty() const noexcept { return sessions_.empty(); }
    [[nodiscard]] std::size_t impression_count() const noexcept;
    [[nodiscard]] const Session& operator[](std::size_t i) const { return sessions_[i]; }

    /// S_q: indices of sessions per query, in dataset order.
    [[nodiscard]] std::map<std::string, std::vector<std::size_t>> sessions_by_query() const;

    friend bool operator==(const Dataset&, const Dataset&) = default;

private:
    std::vector<Session> sessions_;
};

/// Document id -> 64-dim feature vector. Entries are finite.
class FeatureTable {
public:
    void insert(std::string doc, const FeatureVector& x);
    [[nodiscard]] bool contains(std::string_view doc) const;
    /// Throws ClickLogError naming the document if absent.
    [[nodiscard]] const FeatureVector& at(std::string_view doc) const;
    [[nodiscard]] std::size_t size() const noexcept { return rows_.size(); }
    [[nodiscard]] bool empty() const noexcept { return rows_.empty(); }
    [[nodiscard]] const std::map<std::string, FeatureVector, std::less<>>& rows() const noexcept {
        return rows_;
    }

    friend bool operator==(const FeatureTable&, const FeatureTable&) = default;

private:
    std::map<std::string, FeatureVector, std::less<>> rows_;
};

// JSON Lines: {"sid": ..., "query": ..., "docs": [{"id": ..., "click": 0|1}, ...]}
Dataset parse_sessions(std::istream& in);
Dataset load_sessions(const std::string& path);
void write_sessions(std::ostream& out, const Dataset& d);
void save_sessions(const std::string& path, const Dataset& d);

// CSV with header doc_id,f1,...,f64
FeatureTable parse_features(std::istream& in);
FeatureTable load_features(const std::string& path);
void write_features(std::ostream& out, const FeatureTable& t);
void save_features(const std::string& path, const FeatureTable& t);

/// First floor(train_fraction * n) sessions train, the rest test.
/// Throws std::invalid_argument if the fraction is outside (0, 1).
std::pair<Dataset, Dataset> chronological_split(const Dataset& d, double train_fraction);

/// Drops test sessions whose query never occurs in train, then drops
/// impressions whose document never occurs in train, then drops sessions
/// left empty. Surviving impressions keep their relative order.
Dataset filter_test(const Dataset& test, const Dataset& train);

enum class FrequencyBucket {
    k1To10,
    k10To30,
    k30To100,
    k100To500,
    k500To2000,
    k2000To10000,
    k10000Plus,
};

inline constexpr std::array<FrequencyBucket, 7> kAllBuckets = {
    FrequencyBucket::k1To10,      FrequencyBucket::k10To30,    FrequencyBucket::k30To100,
    FrequencyBucket::k100To500,   FrequencyBucket::k500To2000, FrequencyBucket::k2000To10000,
    FrequencyBucket::k10000Plus,
};

/// Left-closed, right-open: 10 lands in "10-30".
FrequencyBucket bucket_for_count(std::size_t count);
std::string_view bucket_label(FrequencyBucket b);

class QueryFrequencyIndex {
public:
    QueryFrequencyIndex() = default;
    explicit QueryFrequencyIndex(const Dataset& train);

    [[nodiscard]] std::size_t count(std::string_view query) const;
    /// nullopt for queries absent from the training split.
    [[nodiscard]] std::optional<FrequencyBucket> bucket(std::string_view query) const;
    [[nodiscard]] const std::map<std::string, std::size_t, std::less<>>& counts() const noexcept {
        return counts_;
    }
    [[nodiscard]] bool empty() const noexcept { return counts_.empty(); }

private:
    std::map<std::string, std::size_t, std::less<>> counts_;
};

inline QueryFrequencyIndex query_frequency_index(const Dataset& train) {
    return QueryFrequencyIndex(train);
}

}  // namespace vbcm
