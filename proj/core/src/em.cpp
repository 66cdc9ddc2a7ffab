#include "vbcm/em.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <ostream>

#include "csv.hpp"

namespace vbcm {

namespace {

void check_inputs(double alpha, double gamma, double sigma, ModelKind kind) {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(alpha) || !unit(gamma) || (has_vision(kind) && !unit(sigma))) {
        throw std::domain_error("E-step inputs must lie in [0, 1]");
    }
}

[[noreturn]] void impossible(bool clicked, ModelKind kind) {
    throw ImpossibleObservationError(std::string(clicked ? "click" : "skip") +
                                     " has zero probability under " +
                                     std::string(model_kind_label(kind)) + " parameters");
}

}  // namespace

PosteriorTriple e_step_closed_form(double alpha, double gamma, double sigma, bool clicked,
                                   ModelKind kind) {
    check_inputs(alpha, gamma, sigma, kind);
    PosteriorTriple p;
    switch (vision_form(kind)) {
        case VisionForm::None: {
            if (clicked) {
                if (alpha * gamma <= 0.0) impossible(clicked, kind);
                p.p_rel = 1.0;
                p.p_exam = 1.0;
            } else {
                const double den = 1.0 - alpha * gamma;
                if (den <= 0.0) impossible(clicked, kind);
                p.p_rel = alpha * (1.0 - gamma) / den;
                p.p_exam = gamma * (1.0 - alpha) / den;
            }
            break;
        }
        case VisionForm::Complement: {
            const double exam = gamma + (1.0 - gamma) * sigma;
            if (clicked) {
                if (alpha * exam <= 0.0) impossible(clicked, kind);
                p.p_rel = 1.0;
                p.p_exam = gamma / exam;
                p.p_vision = sigma * (1.0 - gamma) / exam;
                p.p_gate = p.p_vision;
            } else {
                const double den = 1.0 - alpha * exam;
                if (den <= 0.0) impossible(clicked, kind);
                p.p_rel = alpha * (1.0 - (gamma + sigma - gamma * sigma)) / den;
                p.p_exam = gamma * (1.0 - alpha) / den;
                p.p_vision = sigma * (1.0 - gamma) * (1.0 - alpha) / den;
                p.p_gate = (1.0 - gamma) * (1.0 - sigma * alpha) / den;
            }
            break;
        }
        case VisionForm::Multiplicative: {
            const double exam = gamma * sigma;
            if (clicked) {
                if (alpha * exam <= 0.0) impossible(clicked, kind);
                p.p_rel = 1.0;
                p.p_exam = 1.0;
                p.p_vision = 1.0;
                p.p_gate = 1.0;
            } else {
                const double den = 1.0 - alpha * exam;
                if (den <= 0.0) impossible(clicked, kind);
                p.p_rel = alpha * (1.0 - exam) / den;
                p.p_exam = gamma * (1.0 - alpha * sigma) / den;
                p.p_vision = exam * (1.0 - alpha) / den;
                p.p_gate = p.p_exam;
            }
            break;
        }
    }
    return p;
}

PosteriorTriple e_step_enumerated(double alpha, double gamma, double sigma, bool clicked,
                                  ModelKind kind) {
    check_inputs(alpha, gamma, sigma, kind);
    const VisionForm form = vision_form(kind);
    auto bern = [](double p, int v) { return v == 1 ? p : 1.0 - p; };
    // P(E~ = et | E = e) under each form.
    auto vision_table = [&](int e, int et) -> double {
        switch (form) {
            case VisionForm::None: return et == e ? 1.0 : 0.0;
            case VisionForm::Complement: return e == 1 ? (et == 1 ? 1.0 : 0.0) : bern(sigma, et);
            case VisionForm::Multiplicative: return e == 1 ? bern(sigma, et) : (et == 0 ? 1.0 : 0.0);
        }
        return 0.0;
    };

    double total = 0.0;
    double rel = 0.0;
    double exam = 0.0;
    double vision = 0.0;
    double gate = 0.0;
    const int c_obs = clicked ? 1 : 0;
    for (int e = 0; e <= 1; ++e) {
        for (int et = 0; et <= 1; ++et) {
            for (int r = 0; r <= 1; ++r) {
                const int c = et & r;
                if (c != c_obs) continue;
                const double w = bern(gamma, e) * vision_table(e, et) * bern(alpha, r);
                total += w;
                if (r == 1) rel += w;
                if (e == 1) exam += w;
                if (form == VisionForm::Complement) {
                    if (e == 0 && et == 1) vision += w;
                    if (e == 0) gate += w;
                } else if (form == VisionForm::Multiplicative) {
                    if (e == 1 && et == 1) vision += w;
                    if (e == 1) gate += w;
                }
            }
        }
    }
    if (total <= 0.0) impossible(clicked, kind);
    return {rel / total, exam / total, vision / total, gate / total};
}

EmConfig EmConfig::defaults_for(ModelKind kind) {
    EmConfig cfg;
    if (is_ubm_family(kind)) {
        cfg.init_alpha = 0.2;
        cfg.init_gamma = 0.5;
    } else {
        cfg.init_alpha = 0.5;
        cfg.init_gamma = 0.5;
    }
    return cfg;
}

void EmConfig::validate() const {
    if (max_iters < 0) throw std::invalid_argument("max_iters must be non-negative");
    if (!(convergence_tol > 0.0)) throw std::invalid_argument("convergence_tol must be positive");
    auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!open_unit(init_alpha)) throw std::invalid_argument("init_alpha must lie in (0, 1)");
    if (!open_unit(init_gamma)) throw std::invalid_argument("init_gamma must lie in (0, 1)");
    // sigma = 0 is allowed so a vision model can be pinned to its base model.
    if (!(init_sigma >= 0.0 && init_sigma < 1.0)) {
        throw std::invalid_argument("init_sigma must lie in [0, 1)");
    }
}

void EmTrace::write_csv(std::ostream& out) const {
    out << "iter,avg_ll,max_param_delta\n";
    for (const auto& r : records) {
        out << r.iter << ',' << csv::format_double(r.avg_ll) << ','
            << csv::format_double(r.max_param_delta) << '\n';
    }
}

TrainingIndex::TrainingIndex(const Dataset& train, ModelKind kind) : kind_(kind) {
    std::unordered_map<std::string, std::uint32_t> alpha_ids;
    std::map<GammaKey, std::uint32_t> gamma_ids;
    const bool ubm = is_ubm_family(kind);

    offsets_.reserve(train.size() + 1);
    offsets_.push_back(0);
    slots_.reserve(train.impression_count());
    for (const auto& s : train.sessions()) {
        int prev = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const auto& imp = s.impressions[i];
            const int rank = static_cast<int>(i) + 1;
            Slot slot;
            slot.clicked = imp.clicked;

            std::string akey = s.query;
            akey.push_back('\x1f');
            akey += imp.doc;
            auto [ait, anew] =
                alpha_ids.try_emplace(std::move(akey), static_cast<std::uint32_t>(alpha_keys_.size()));
            if (anew) alpha_keys_.emplace_back(s.query, imp.doc);
            slot.alpha = ait->second;

            const GammaKey gk{rank, ubm ? prev : 0};
            auto [git, gnew] = gamma_ids.try_emplace(gk, static_cast<std::uint32_t>(gamma_keys_.size()));
            if (gnew) gamma_keys_.push_back(gk);
            slot.gamma = git->second;

            auto [dit, dnew] = doc_ids_.try_emplace(imp.doc, static_cast<std::uint32_t>(docs_.size()));
            if (dnew) docs_.push_back(imp.doc);
            slot.doc = dit->second;

            slots_.push_back(slot);
            if (imp.clicked) prev = rank;
        }
        offsets_.push_back(slots_.size());
    }
}

std::optional<std::uint32_t> TrainingIndex::doc_slot(std::string_view doc) const {
    auto it = doc_ids_.find(std::string(doc));
    if (it == doc_ids_.end()) return std::nullopt;
    return it->second;
}

ParamVectors ParamVectors::initial(const TrainingIndex& index, const EmConfig& cfg) {
    ParamVectors p;
    p.alpha.assign(index.alpha_keys().size(), cfg.init_alpha);
    p.gamma.assign(index.gamma_keys().size(), cfg.init_gamma);
    if (has_vision(index.kind())) p.sigma.assign(index.docs().size(), cfg.init_sigma);
    return p;
}

SufficientStats::SufficientStats(std::size_t n_alpha, std::size_t n_gamma, std::size_t n_sigma)
    : alpha_num(n_alpha),
      alpha_count(n_alpha, 0),
      gamma_num(n_gamma),
      gamma_count(n_gamma, 0),
      sigma_num(n_sigma),
      sigma_den(n_sigma) {}

void SufficientStats::add(const TrainingIndex::Slot& slot, const PosteriorTriple& post) {
    alpha_num[slot.alpha].add(post.p_rel);
    ++alpha_count[slot.alpha];
    gamma_num[slot.gamma].add(post.p_exam);
    ++gamma_count[slot.gamma];
    if (!sigma_num.empty()) {
        sigma_num[slot.doc].add(post.p_vision);
        sigma_den[slot.doc].add(post.p_gate);
    }
}

MStepResult m_step(const SufficientStats& stats, const ParamVectors& previous, bool update_sigma) {
    MStepResult out;
    out.params = previous;
    double delta = 0.0;
    auto assign = [&delta](double& slot, double v) {
        v = std::clamp(v, 0.0, 1.0);
        delta = std::max(delta, std::abs(v - slot));
        slot = v;
    };
    for (std::size_t i = 0; i < out.params.alpha.size(); ++i) {
        if (stats.alpha_count[i] == 0) continue;
        assign(out.params.alpha[i], stats.alpha_num[i].value() / static_cast<double>(stats.alpha_count[i]));
    }
    for (std::size_t i = 0; i < out.params.gamma.size(); ++i) {
        if (stats.gamma_count[i] == 0) continue;
        assign(out.params.gamma[i], stats.gamma_num[i].value() / static_cast<double>(stats.gamma_count[i]));
    }
    if (update_sigma) {
        for (std::size_t i = 0; i < out.params.sigma.size(); ++i) {
            const double den = stats.sigma_den[i].value();
            if (!(den > 0.0)) {
                out.flagged_sigma.push_back(static_cast<std::uint32_t>(i));
                continue;
            }
            assign(out.params.sigma[i], stats.sigma_num[i].value() / den);
        }
    }
    out.max_delta = delta;
    return out;
}

EmEngine::EmEngine(const Dataset& train, ModelKind kind, EmConfig cfg)
    : index_(train, kind), cfg_(cfg) {
    if (train.empty()) throw std::invalid_argument("cannot run EM on an empty dataset");
    cfg_.validate();
    params_ = ParamVectors::initial(index_, cfg_);
}

void EmEngine::set_params(ParamVectors p) {
    if (p.alpha.size() != params_.alpha.size() || p.gamma.size() != params_.gamma.size() ||
        p.sigma.size() != params_.sigma.size()) {
        throw std::invalid_argument("parameter vectors do not match the training index");
    }
    params_ = std::move(p);
}

namespace {

struct SlotEval {
    PosteriorTriple post;
    double ll = 0.0;
};

double exam_of(VisionForm form, double gamma, double sigma) {
    switch (form) {
        case VisionForm::None: return gamma;
        case VisionForm::Multiplicative: return gamma * sigma;
        case VisionForm::Complement: return gamma + (1.0 - gamma) * sigma;
    }
    return gamma;
}

}  // namespace

EStepResult EmEngine::e_step() const {
    const auto slots = index_.slots();
    const auto offsets = index_.session_offsets();
    const ModelKind kind = index_.kind();
    const VisionForm form = vision_form(kind);
    const ParamVectors& p = params_;
    std::vector<SlotEval> evals(slots.size());

    parallel_for(offsets.size() - 1, cfg_.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t si = begin; si < end; ++si) {
            for (std::size_t k = offsets[si]; k < offsets[si + 1]; ++k) {
                const auto& slot = slots[k];
                const double a = p.alpha[slot.alpha];
                const double g = p.gamma[slot.gamma];
                const double s = p.sigma.empty() ? 0.0 : p.sigma[slot.doc];
                evals[k].post = e_step_closed_form(a, g, s, slot.clicked, kind);
                evals[k].ll = click_log_term(a * exam_of(form, g, s), slot.clicked);
            }
        }
    });

    EStepResult out{SufficientStats(p.alpha.size(), p.gamma.size(), p.sigma.size()), 0.0};
    CompensatedSum ll;
    for (std::size_t k = 0; k < slots.size(); ++k) {
        out.stats.add(slots[k], evals[k].post);
        ll.add(evals[k].ll);
    }
    out.avg_ll = slots.empty() ? 0.0 : ll.value() / static_cast<double>(slots.size());
    return out;
}

double EmEngine::average_log_likelihood() const {
    const auto slots = index_.slots();
    const auto offsets = index_.session_offsets();
    const VisionForm form = vision_form(index_.kind());
    std::vector<double> terms(slots.size());
    parallel_for(offsets.size() - 1, cfg_.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t k = offsets[begin]; k < offsets[end]; ++k) {
            const auto& slot = slots[k];
            const double s = params_.sigma.empty() ? 0.0 : params_.sigma[slot.doc];
            const double prob =
                params_.alpha[slot.alpha] * exam_of(form, params_.gamma[slot.gamma], s);
            terms[k] = click_log_term(prob, slot.clicked);
        }
    });
    CompensatedSum ll;
    for (double t : terms) ll.add(t);
    return slots.empty() ? 0.0 : ll.value() / static_cast<double>(slots.size());
}

ParamStore EmEngine::to_param_store() const {
    ParamStore store(index_.kind());
    for (std::size_t i = 0; i < params_.alpha.size(); ++i) {
        const auto& [q, d] = index_.alpha_keys()[i];
        store.set_alpha(q, d, params_.alpha[i]);
    }
    for (std::size_t i = 0; i < params_.gamma.size(); ++i) {
        store.set_gamma(index_.gamma_keys()[i], params_.gamma[i]);
    }
    for (std::size_t i = 0; i < params_.sigma.size(); ++i) {
        store.set_sigma(index_.docs()[i], params_.sigma[i]);
    }
    return store;
}

EmResult run_em(const Dataset& train, ModelKind kind, const EmConfig& cfg) {
    EmEngine engine(train, kind, cfg);
    EmTrace trace;
    for (int it = 1; it <= cfg.max_iters; ++it) {
        EStepResult e = engine.e_step();
        MStepResult m = m_step(e.stats, engine.params(), cfg.update_sigma && has_vision(kind));
        engine.set_params(std::move(m.params));
        trace.records.push_back({it, e.avg_ll, m.max_delta});
        trace.iterations = it;
        if (m.max_delta < cfg.convergence_tol) {
            trace.converged = true;
            break;
        }
    }
    trace.final_avg_ll = engine.average_log_likelihood();
    return {engine.to_param_store(), std::move(trace)};
}

}  // namespace vbcm
