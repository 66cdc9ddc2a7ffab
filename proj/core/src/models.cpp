#include "vbcm/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace vbcm {

VisionForm vision_form(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::PBM:
        case ModelKind::UBM: return VisionForm::None;
        case ModelKind::VPBM1:
        case ModelKind::VUBM1: return VisionForm::Multiplicative;
        case ModelKind::VPBM2:
        case ModelKind::VUBM2: return VisionForm::Complement;
    }
    return VisionForm::None;
}

bool has_vision(ModelKind kind) noexcept { return vision_form(kind) != VisionForm::None; }

bool is_ubm_family(ModelKind kind) noexcept {
    return kind == ModelKind::UBM || kind == ModelKind::VUBM1 || kind == ModelKind::VUBM2;
}

std::string_view model_kind_name(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::PBM: return "pbm";
        case ModelKind::UBM: return "ubm";
        case ModelKind::VPBM1: return "vpbm1";
        case ModelKind::VPBM2: return "vpbm2";
        case ModelKind::VUBM1: return "vubm1";
        case ModelKind::VUBM2: return "vubm2";
    }
    return "?";
}

std::string_view model_kind_label(ModelKind kind) noexcept {
    switch (kind) {
        case ModelKind::PBM: return "PBM";
        case ModelKind::UBM: return "UBM";
        case ModelKind::VPBM1: return "vPBM-1";
        case ModelKind::VPBM2: return "vPBM-2";
        case ModelKind::VUBM1: return "vUBM-1";
        case ModelKind::VUBM2: return "vUBM-2";
    }
    return "?";
}

ModelKind parse_model_kind(std::string_view name) {
    std::string norm;
    for (char c : name) {
        if (c == '-' || c == '_') continue;
        norm += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    for (ModelKind k : kAllModelKinds) {
        if (norm == model_kind_name(k)) return k;
    }
    throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

UnknownKeyError::UnknownKeyError(std::string table, const std::string& key)
    : std::out_of_range("unknown key in " + table + " table: " + key), table_(std::move(table)) {}

namespace {

void check_unit(double v, const char* what) {
    if (!(v >= 0.0 && v <= 1.0)) {
        throw std::domain_error(std::string(what) + " must lie in [0, 1], got " +
                                std::to_string(v));
    }
}

std::string gamma_key_text(GammaKey k) {
    return "(" + std::to_string(k.rank) + ", " + std::to_string(k.prev) + ")";
}

}  // namespace

void ParamStore::set_alpha(std::string query, std::string doc, double value) {
    check_unit(value, "alpha");
    alpha_.insert_or_assign({std::move(query), std::move(doc)}, value);
}

void ParamStore::set_gamma(GammaKey key, double value) {
    check_unit(value, "gamma");
    if (key.rank < 1 || key.prev < 0 || key.prev >= key.rank) {
        throw std::domain_error("invalid gamma key " + gamma_key_text(key));
    }
    if (!is_ubm_family(kind_) && key.prev != 0) {
        throw std::domain_error("position-only model cannot store gamma " + gamma_key_text(key));
    }
    gamma_.insert_or_assign(key, value);
}

void ParamStore::set_sigma(std::string doc, double value) {
    check_unit(value, "sigma");
    if (!has_vision(kind_)) {
        throw std::domain_error(std::string(model_kind_label(kind_)) + " has no vision bias");
    }
    sigma_.insert_or_assign(std::move(doc), value);
}

double ParamStore::alpha(std::string_view query, std::string_view doc) const {
    auto it = alpha_.find(AlphaKey{std::string(query), std::string(doc)});
    if (it == alpha_.end()) {
        throw UnknownKeyError("alpha", "(" + std::string(query) + ", " + std::string(doc) + ")");
    }
    return it->second;
}

bool ParamStore::has_alpha(std::string_view query, std::string_view doc) const {
    return alpha_.contains(AlphaKey{std::string(query), std::string(doc)});
}

double ParamStore::gamma(GammaKey key) const {
    auto it = gamma_.find(key);
    if (it == gamma_.end()) throw UnknownKeyError("gamma", gamma_key_text(key));
    return it->second;
}

double ParamStore::sigma(std::string_view doc) const {
    auto it = sigma_.find(doc);
    if (it == sigma_.end()) throw UnknownKeyError("sigma", std::string(doc));
    return it->second;
}

GammaKey ParamStore::gamma_key(ExamContext ctx) const noexcept {
    return is_ubm_family(kind_) ? GammaKey{ctx.rank, ctx.prev_click_rank} : GammaKey{ctx.rank, 0};
}

double click_log_term(double p, bool clicked) noexcept {
    const double q = std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon);
    return clicked ? std::log(q) : std::log1p(-q);
}

int previous_click_rank(const std::vector<bool>& clicks, int r) {
    if (r < 1 || static_cast<std::size_t>(r) > clicks.size() + 1) {
        throw std::out_of_range("rank " + std::to_string(r) + " outside 1.." +
                                std::to_string(clicks.size() + 1));
    }
    for (int k = r - 1; k >= 1; --k) {
        if (clicks[static_cast<std::size_t>(k - 1)]) return k;
    }
    return 0;
}

double examination_prob(ModelKind kind, double gamma, double sigma) {
    check_unit(gamma, "gamma");
    switch (vision_form(kind)) {
        case VisionForm::None: return gamma;
        case VisionForm::Multiplicative: check_unit(sigma, "sigma"); return gamma * sigma;
        case VisionForm::Complement: check_unit(sigma, "sigma"); return gamma + (1.0 - gamma) * sigma;
    }
    return gamma;
}

double conditional_click_prob(const ParamStore& params, std::string_view query,
                              std::string_view doc, ExamContext ctx) {
    const ModelKind kind = params.kind();
    const double a = params.alpha(query, doc);
    const double g = params.gamma(params.gamma_key(ctx));
    const double s = has_vision(kind) ? params.sigma(doc) : 0.0;
    return a * examination_prob(kind, g, s);
}

std::vector<double> conditional_click_probs(const ParamStore& params, const Session& s) {
    std::vector<double> out;
    out.reserve(s.size());
    int prev = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const int rank = static_cast<int>(i) + 1;
        out.push_back(conditional_click_prob(params, s.query, s.impressions[i].doc, {rank, prev}));
        if (s.impressions[i].clicked) prev = rank;
    }
    return out;
}

double session_log_likelihood(const ParamStore& params, const Session& s) {
    const auto p = conditional_click_probs(params, s);
    double ll = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) ll += click_log_term(p[i], s.impressions[i].clicked);
    return ll;
}

double session_click_marginal(const ParamStore& params, const Session& s, int r) {
    if (r < 1 || static_cast<std::size_t>(r) > s.size()) {
        throw std::out_of_range("rank " + std::to_string(r) + " outside session of length " +
                                std::to_string(s.size()));
    }
    // click_prob(k, j): P(C_k = 1 | last click at j), ranks 1-based, j = 0 is "no click".
    auto click_prob = [&](int k, int j) {
        return conditional_click_prob(params, s.query,
                                      s.impressions[static_cast<std::size_t>(k - 1)].doc, {k, j});
    };
    std::vector<double> marginal(static_cast<std::size_t>(r) + 1, 0.0);
    marginal[0] = 1.0;
    for (int k = 1; k <= r; ++k) {
        double total = 0.0;
        for (int j = 0; j < k; ++j) {
            double no_click_between = 1.0;
            for (int m = j + 1; m < k; ++m) no_click_between *= 1.0 - click_prob(m, j);
            total += marginal[static_cast<std::size_t>(j)] * no_click_between * click_prob(k, j);
        }
        marginal[static_cast<std::size_t>(k)] = total;
    }
    return marginal[static_cast<std::size_t>(r)];
}

}  // namespace vbcm
