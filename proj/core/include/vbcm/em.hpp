#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vbcm/clicklog.hpp"
#include "vbcm/models.hpp"
#include "vbcm/parallel.hpp"

namespace vbcm {

/// Per-impression posteriors of the hidden events given the session clicks.
///
///   p_rel    = P(R = 1 | C)
///   p_exam   = P(E = 1 | C)
///   p_vision = posterior mass of the sigma-gated event:
///                -2 kinds: P(E~ = 1, E = 0 | C)
///                -1 kinds: P(E~ = 1, E = 1 | C)
///                PBM/UBM:  0
///   p_gate   = posterior mass of the event sigma is conditioned on, i.e. the
///              denominator of the sigma ratio: P(E = 0 | C) for -2 kinds,
///              P(E = 1 | C) for -1 kinds, 0 for PBM/UBM.
struct PosteriorTriple {
    double p_rel = 0.0;
    double p_exam = 0.0;
    double p_vision = 0.0;
    double p_gate = 0.0;
};

/// The observed click has zero probability under the given parameters.
class ImpossibleObservationError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Closed-form posteriors. sigma is ignored for PBM/UBM.
PosteriorTriple e_step_closed_form(double alpha, double gamma, double sigma, bool clicked,
                                   ModelKind kind);

/// Same posteriors by summing the joint over (E, E~, R) in {0,1}^3 with
/// C = E~ AND R, then conditioning on the observed click.
PosteriorTriple e_step_enumerated(double alpha, double gamma, double sigma, bool clicked,
                                  ModelKind kind);

struct EmConfig {
    int max_iters = 200;
    /// Stop once the largest absolute parameter change drops below this.
    double convergence_tol = 1e-5;
    double init_alpha = 0.2;
    double init_gamma = 0.5;
    double init_sigma = 0.5;
    /// When false sigma stays at init_sigma for the whole run.
    bool update_sigma = true;
    /// 0 selects default_thread_count().
    std::size_t threads = 0;

    /// Recommended starting points: UBM family alpha 0.2 / gamma 0.5,
    /// PBM family alpha 0.5 / gamma 0.5.
    static EmConfig defaults_for(ModelKind kind);
    /// Throws std::invalid_argument on out-of-domain settings.
    void validate() const;
};

struct IterationRecord {
    int iter = 0;
    /// Average per-impression log-likelihood under the parameters the E-step used.
    double avg_ll = 0.0;
    double max_param_delta = 0.0;
};

struct EmTrace {
    std::vector<IterationRecord> records;
    int iterations = 0;
    bool converged = false;
    /// Average log-likelihood of the returned parameters.
    double final_avg_ll = 0.0;

    /// CSV "iter,avg_ll,max_param_delta".
    void write_csv(std::ostream& out) const;
};

/// Training data compiled to integer parameter slots.
class TrainingIndex {
public:
    struct Slot {
        std::uint32_t alpha = 0;
        std::uint32_t gamma = 0;
        std::uint32_t doc = 0;
        bool clicked = false;
    };

    TrainingIndex(const Dataset& train, ModelKind kind);

    [[nodiscard]] ModelKind kind() const noexcept { return kind_; }
    [[nodiscard]] std::span<const Slot> slots() const noexcept { return slots_; }
    /// Slot range [session_offsets()[i], session_offsets()[i+1]) belongs to session i.
    [[nodiscard]] std::span<const std::size_t> session_offsets() const noexcept {
        return offsets_;
    }
    [[nodiscard]] const std::vector<ParamStore::AlphaKey>& alpha_keys() const noexcept {
        return alpha_keys_;
    }
    [[nodiscard]] const std::vector<GammaKey>& gamma_keys() const noexcept { return gamma_keys_; }
    [[nodiscard]] const std::vector<std::string>& docs() const noexcept { return docs_; }
    [[nodiscard]] std::optional<std::uint32_t> doc_slot(std::string_view doc) const;

private:
    ModelKind kind_;
    std::vector<Slot> slots_;
    std::vector<std::size_t> offsets_;
    std::vector<ParamStore::AlphaKey> alpha_keys_;
    std::vector<GammaKey> gamma_keys_;
    std::vector<std::string> docs_;
    std::unordered_map<std::string, std::uint32_t> doc_ids_;
};

/// Flat parameter tables aligned with a TrainingIndex. sigma is empty for PBM/UBM.
struct ParamVectors {
    std::vector<double> alpha;
    std::vector<double> gamma;
    std::vector<double> sigma;

    static ParamVectors initial(const TrainingIndex& index, const EmConfig& cfg);
};

/// Posterior sums per parameter key, accumulated in a fixed order.
struct SufficientStats {
    std::vector<CompensatedSum> alpha_num;
    std::vector<std::size_t> alpha_count;
    std::vector<CompensatedSum> gamma_num;
    std::vector<std::size_t> gamma_count;
    std::vector<CompensatedSum> sigma_num;
    std::vector<CompensatedSum> sigma_den;

    SufficientStats(std::size_t n_alpha, std::size_t n_gamma, std::size_t n_sigma);

    void add(const TrainingIndex::Slot& slot, const PosteriorTriple& post);
};

struct MStepResult {
    ParamVectors params;
    double max_delta = 0.0;
    /// sigma slots whose denominator summed to zero; they keep the previous value.
    std::vector<std::uint32_t> flagged_sigma;
};

/// alpha = mean p_rel, gamma = mean p_exam, sigma = sum p_vision / sum p_gate.
/// With update_sigma false, sigma is copied from previous.
MStepResult m_step(const SufficientStats& stats, const ParamVectors& previous,
                   bool update_sigma = true);

struct EStepResult {
    SufficientStats stats;
    double avg_ll = 0.0;
};

/// Owns the compiled training data and current parameters; exposes the E and
/// M steps separately so regression-based EM can replace the sigma update.
class EmEngine {
public:
    EmEngine(const Dataset& train, ModelKind kind, EmConfig cfg);

    [[nodiscard]] const TrainingIndex& index() const noexcept { return index_; }
    [[nodiscard]] const EmConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const ParamVectors& params() const noexcept { return params_; }
    void set_params(ParamVectors p);

    /// Posteriors under the current parameters. Sessions are processed in
    /// parallel, sums are reduced per key in slot order, so the result does
    /// not depend on the thread count.
    [[nodiscard]] EStepResult e_step() const;
    [[nodiscard]] double average_log_likelihood() const;

    [[nodiscard]] ParamStore to_param_store() const;

private:
    TrainingIndex index_;
    EmConfig cfg_;
    ParamVectors params_;
};

struct EmResult {
    ParamStore params;
    EmTrace trace;
};

/// Standard EM until max_iters or the largest parameter change < tol.
EmResult run_em(const Dataset& train, ModelKind kind, const EmConfig& cfg);

}  // namespace vbcm
