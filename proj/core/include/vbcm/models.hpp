#pragma once

#include <array>
#include <compare>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vbcm/clicklog.hpp"

namespace vbcm {

enum class ModelKind { PBM, UBM, VPBM1, VPBM2, VUBM1, VUBM2 };

inline constexpr std::array<ModelKind, 6> kAllModelKinds = {
    ModelKind::PBM,   ModelKind::UBM,   ModelKind::VPBM1,
    ModelKind::VPBM2, ModelKind::VUBM1, ModelKind::VUBM2,
};

/// How the per-document vision bias enters the examination probability.
enum class VisionForm {
    None,            // exam = gamma
    Multiplicative,  // exam = gamma * sigma            (-1 variants)
    Complement,      // exam = gamma + (1 - gamma) sigma (-2 variants)
};

VisionForm vision_form(ModelKind kind) noexcept;
bool has_vision(ModelKind kind) noexcept;
/// UBM family indexes gamma by (rank, previous click rank); PBM family by rank.
bool is_ubm_family(ModelKind kind) noexcept;

/// Lower-case CLI/file name: "pbm", "ubm", "vpbm1", "vpbm2", "vubm1", "vubm2".
std::string_view model_kind_name(ModelKind kind) noexcept;
/// Table label, e.g. "vUBM-2".
std::string_view model_kind_label(ModelKind kind) noexcept;
/// Accepts the names above case-insensitively, with or without a dash.
ModelKind parse_model_kind(std::string_view name);

/// A parameter lookup hit a key the store does not hold.
class UnknownKeyError : public std::out_of_range {
public:
    UnknownKeyError(std::string table, const std::string& key);
    [[nodiscard]] const std::string& table() const noexcept { return table_; }

private:
    std::string table_;
};

/// rank >= 1; prev_click_rank in [0, rank - 1], 0 meaning no earlier click.
struct ExamContext {
    int rank = 1;
    int prev_click_rank = 0;
};

/// Key of the position-bias table. PBM-family stores always use prev == 0.
struct GammaKey {
    int rank = 1;
    int prev = 0;

    friend auto operator<=>(const GammaKey&, const GammaKey&) = default;
};

/// alpha_qd, gamma_r / gamma_rr', sigma_d for one model kind. Every stored
/// value is in [0, 1]; setters throw std::domain_error otherwise.
class ParamStore {
public:
    using AlphaKey = std::pair<std::string, std::string>;  // (query, doc)

    explicit ParamStore(ModelKind kind = ModelKind::UBM) : kind_(kind) {}

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }

    void set_alpha(std::string query, std::string doc, double value);
    void set_gamma(GammaKey key, double value);
    void set_sigma(std::string doc, double value);

    [[nodiscard]] double alpha(std::string_view query, std::string_view doc) const;
    [[nodiscard]] double gamma(GammaKey key) const;
    [[nodiscard]] double sigma(std::string_view doc) const;

    [[nodiscard]] bool has_alpha(std::string_view query, std::string_view doc) const;

    /// Table key for a context under this store's kind.
    [[nodiscard]] GammaKey gamma_key(ExamContext ctx) const noexcept;

    [[nodiscard]] const std::map<AlphaKey, double>& alphas() const noexcept { return alpha_; }
    [[nodiscard]] const std::map<GammaKey, double>& gammas() const noexcept { return gamma_; }
    [[nodiscard]] const std::map<std::string, double, std::less<>>& sigmas() const noexcept {
        return sigma_;
    }

    friend bool operator==(const ParamStore&, const ParamStore&) = default;

private:
    ModelKind kind_;
    std::map<AlphaKey, double> alpha_;
    std::map<GammaKey, double> gamma_;
    std::map<std::string, double, std::less<>> sigma_;
};

/// Clamp used inside every log: p is mapped into [kProbEpsilon, 1 - kProbEpsilon].
inline constexpr double kProbEpsilon = 1e-12;

/// Log-likelihood of one Bernoulli outcome with clamped probability.
double click_log_term(double p, bool clicked) noexcept;

/// Largest k < r with clicks[k - 1] set, else 0. Requires 1 <= r <= clicks.size() + 1.
int previous_click_rank(const std::vector<bool>& clicks, int r);

/// gamma for PBM/UBM, gamma * sigma for -1, gamma + (1 - gamma) sigma for -2.
double examination_prob(ModelKind kind, double gamma, double sigma);

double conditional_click_prob(const ParamStore& params, std::string_view query,
                              std::string_view doc, ExamContext ctx);

/// P(C_r = 1 | observed C_<r) for every rank of the session.
std::vector<double> conditional_click_probs(const ParamStore& params, const Session& s);

/// Sum over ranks of c ln p + (1 - c) ln(1 - p), natural log, clamped.
double session_log_likelihood(const ParamStore& params, const Session& s);

/// Unconditional P(C_r = 1) for the session's documents, marginalising the
/// click pattern above r through the last-click chain. Ignores s's clicks.
double session_click_marginal(const ParamStore& params, const Session& s, int r);

}  // namespace vbcm
