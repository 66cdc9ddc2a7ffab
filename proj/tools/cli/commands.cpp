#include "commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"
#include "vbcm/clicklog.hpp"
#include "vbcm/metrics.hpp"
#include "vbcm/model_io.hpp"
#include "vbcm/regem.hpp"

namespace vbcm::cli {

namespace {

namespace fs = std::filesystem;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class F>
int guarded(std::ostream& err, F&& body) {
    try {
        body();
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw UsageError(msg);
}

void require_distinct(const std::vector<std::string>& paths) {
    for (std::size_t i = 0; i < paths.size(); ++i) {
        for (std::size_t j = i + 1; j < paths.size(); ++j) {
            if (!paths[i].empty() && paths[i] == paths[j]) {
                throw UsageError("path '" + paths[i] + "' is used twice");
            }
        }
    }
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << text;
    if (!f) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::string model_name(const ModelFile& m) {
    std::string name(model_kind_label(m.params.kind()));
    if (m.estimator == Estimator::Regression) name += " (regression EM)";
    return name;
}

struct EvalInputs {
    Dataset test;
    std::optional<QueryFrequencyIndex> index;
};

EvalInputs load_eval_inputs(const std::string& test_path, const std::string& train_path,
                            std::ostream& out) {
    EvalInputs in;
    in.test = load_sessions(test_path);
    if (!train_path.empty()) {
        const Dataset train = load_sessions(train_path);
        const std::size_t before = in.test.impression_count();
        in.test = filter_test(in.test, train);
        in.index = query_frequency_index(train);
        out << "test: " << in.test.size() << " sessions, " << in.test.impression_count()
            << " impressions (" << before - in.test.impression_count()
            << " unseen impressions dropped)\n";
    }
    require(!in.test.empty(), "test set is empty");
    return in;
}

EvalReport evaluate(const EvalInputs& in, const ParamStore& params, const EvalOptions& opts) {
    if (in.index) return bucketed_report(in.test, params, *in.index, opts);
    EvalReport r;
    r.overall = compute_metrics(in.test, params, opts);
    return r;
}

void emit_tables(const std::vector<NamedReport>& reports, std::optional<std::size_t> baseline,
                 int max_rank, const std::string& out_dir, std::ostream& out) {
    const bool buckets = std::any_of(reports.begin(), reports.end(),
                                     [](const NamedReport& r) { return !r.report.buckets.empty(); });
    out << "\n## Metrics\n\n";
    write_metric_table(out, reports, baseline, TableFormat::Markdown);
    out << "\n## Perplexity by rank\n\n";
    write_rank_table(out, reports, baseline, max_rank, TableFormat::Markdown);
    if (buckets) {
        out << "\n## By query frequency\n\n";
        write_bucket_table(out, reports, baseline, TableFormat::Markdown);
    }
    if (out_dir.empty()) return;

    auto save = [&](const std::string& stem, auto&& writer) {
        for (TableFormat fmt : {TableFormat::Csv, TableFormat::Markdown}) {
            std::ostringstream s;
            writer(s, fmt);
            write_file(fs::path(out_dir) / (stem + (fmt == TableFormat::Csv ? ".csv" : ".md")), s.str());
        }
    };
    save("metrics", [&](std::ostream& s, TableFormat f) { write_metric_table(s, reports, baseline, f); });
    save("perplexity_by_rank",
         [&](std::ostream& s, TableFormat f) { write_rank_table(s, reports, baseline, max_rank, f); });
    if (buckets) {
        save("query_frequency",
             [&](std::ostream& s, TableFormat f) { write_bucket_table(s, reports, baseline, f); });
    }
    out << "\ntables written to " << out_dir << '\n';
}

}  // namespace

int cmd_split(const SplitOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require(!o.input.empty() && !o.train_out.empty() && !o.test_out.empty(),
                "split needs --input, --train-out and --test-out");
        require_distinct({o.input, o.train_out, o.test_out});
        const Dataset all = load_sessions(o.input);
        require(!all.empty(), "'" + o.input + "' holds no sessions");
        auto [train, test] = chronological_split(all, o.fraction);
        const std::size_t raw = test.size();
        if (o.filter) test = filter_test(test, train);
        save_sessions(o.train_out, train);
        save_sessions(o.test_out, test);
        out << "train: " << train.size() << " sessions -> " << o.train_out << '\n'
            << "test: " << test.size() << " sessions -> " << o.test_out;
        if (o.filter) out << " (" << raw - test.size() << " sessions dropped by filtering)";
        out << '\n';
    });
}

int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require(!o.train.empty() && !o.model_out.empty(), "train needs --train and --out");
        require_distinct({o.train, o.features, o.model_out, o.trace_out});
        EmConfig cfg = EmConfig::defaults_for(o.kind);
        if (o.max_iters) cfg.max_iters = *o.max_iters;
        if (o.tol) cfg.convergence_tol = *o.tol;
        if (o.init_alpha) cfg.init_alpha = *o.init_alpha;
        if (o.init_gamma) cfg.init_gamma = *o.init_gamma;
        if (o.init_sigma) cfg.init_sigma = *o.init_sigma;
        cfg.update_sigma = !o.fixed_sigma;
        cfg.threads = o.threads;
        cfg.validate();

        const Dataset train = load_sessions(o.train);
        require(!train.empty(), "'" + o.train + "' holds no sessions");
        ModelFile file;
        EmTrace trace;
        if (o.regression) {
            require(has_vision(o.kind), "regression EM needs a model with vision bias");
            require(!o.features.empty(), "regression EM needs --features");
            const FeatureTable features = load_features(o.features);
            auto r = run_regression_em(train, features, o.kind, cfg, o.mlp);
            file = ModelFile{std::move(r.params), Estimator::Regression, std::move(r.mlp)};
            trace = std::move(r.trace);
        } else {
            auto r = run_em(train, o.kind, cfg);
            file = ModelFile{std::move(r.params), Estimator::Standard, std::nullopt};
            trace = std::move(r.trace);
        }
        save_model(o.model_out, file);
        if (!o.trace_out.empty()) {
            std::ostringstream s;
            trace.write_csv(s);
            write_file(o.trace_out, s.str());
        }
        out << model_name(file) << ": " << trace.iterations << " iterations, "
            << (trace.converged ? "converged" : "not converged") << '\n'
            << "final average log-likelihood: " << std::fixed << std::setprecision(6)
            << trace.final_avg_ll << '\n'
            << "model written to " << o.model_out << '\n';
    });
}

int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require(!o.model.empty() && !o.test.empty(), "evaluate needs --model and --test");
        require(o.max_rank >= 1, "--max-rank must be >= 1");
        const EvalOptions opts{o.max_rank, o.threads};
        const ModelFile model = load_model(o.model);
        std::optional<ModelFile> base;
        if (!o.baseline.empty()) base = load_model(o.baseline);
        const EvalInputs in = load_eval_inputs(o.test, o.train, out);

        std::vector<NamedReport> reports;
        std::optional<std::size_t> baseline;
        if (base) {
            reports.push_back({"baseline: " + model_name(*base), evaluate(in, base->params, opts)});
            baseline = 0;
        }
        reports.push_back({model_name(model), evaluate(in, model.params, opts)});
        emit_tables(reports, baseline, o.max_rank, o.out_dir, out);
    });
}

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require(!o.sessions_out.empty() && !o.features_out.empty() && !o.truth_out.empty(),
                "simulate needs --sessions, --features and --truth");
        require_distinct({o.sessions_out, o.features_out, o.truth_out});
        auto [gt, features] = generate_ground_truth(o.sim, o.seed);
        const Dataset d = simulate_sessions(gt, o.sim, o.kind, o.seed, o.threads);
        save_sessions(o.sessions_out, d);
        save_features(o.features_out, features);
        write_file(o.truth_out, ground_truth_to_json(gt, o.kind));
        std::size_t clicks = 0;
        for (const auto& s : d.sessions()) {
            for (const auto& i : s.impressions) clicks += i.clicked ? 1 : 0;
        }
        out << "simulated " << d.size() << " " << model_kind_label(o.kind) << " sessions, "
            << d.impression_count() << " impressions, " << clicks << " clicks\n";
    });
}

int cmd_inspect(const InspectOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require(!o.model.empty(), "inspect needs --model");
        const ModelFile m = load_model(o.model);
        if (!has_vision(m.params.kind())) throw UsageError("model has no vision bias");
        std::vector<std::pair<std::string, double>> docs(m.params.sigmas().begin(),
                                                         m.params.sigmas().end());
        std::stable_sort(docs.begin(), docs.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        auto line = [&](std::size_t pos) {
            out << std::setw(6) << pos + 1 << "  " << docs[pos].first << "  " << std::fixed
                << std::setprecision(6) << docs[pos].second << '\n';
        };
        if (2 * o.k >= docs.size()) {
            out << "all " << docs.size() << " documents by vision bias:\n";
            for (std::size_t i = 0; i < docs.size(); ++i) line(i);
            return;
        }
        out << "top " << o.k << " of " << docs.size() << " documents by vision bias:\n";
        for (std::size_t i = 0; i < o.k; ++i) line(i);
        out << "bottom " << o.k << ":\n";
        for (std::size_t i = docs.size() - o.k; i < docs.size(); ++i) line(i);
    });
}

int cmd_report(const ReportOptions& o, std::ostream& out, std::ostream& err) {
    return guarded(err, [&] {
        require(!o.models.empty() && !o.test.empty(), "report needs --test and at least one --model");
        require(o.max_rank >= 1, "--max-rank must be >= 1");
        const EvalOptions opts{o.max_rank, o.threads};
        const EvalInputs in = load_eval_inputs(o.test, o.train, out);
        std::vector<NamedReport> reports;
        for (const auto& entry : o.models) {
            const auto eq = entry.find('=');
            const std::string path = eq == std::string::npos ? entry : entry.substr(eq + 1);
            const ModelFile m = load_model(path);
            const std::string name = eq == std::string::npos ? model_name(m) : entry.substr(0, eq);
            for (const auto& r : reports) require(r.name != name, "model name '" + name + "' is used twice");
            reports.push_back({name, evaluate(in, m.params, opts)});
        }
        std::optional<std::size_t> baseline;
        if (!o.baseline.empty()) {
            for (std::size_t i = 0; i < reports.size(); ++i) {
                if (reports[i].name == o.baseline) baseline = i;
            }
            require(baseline.has_value(), "no model named '" + o.baseline + "'");
        }
        emit_tables(reports, baseline, o.max_rank, o.out_dir, out);
    });
}

// ---- command line -----------------------------------------------------------

namespace {

std::string json_scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

/// Turns config entries into flags for the chosen subcommand. Top-level keys
/// apply when the subcommand has such a flag; an object keyed by the
/// subcommand name applies unconditionally and wins over top-level keys.
std::vector<std::string> config_args(const std::string& path, CLI::App& sub) {
    std::ifstream f(path);
    if (!f) throw UsageError("cannot open config '" + path + "'");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw UsageError("config '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw UsageError("config '" + path + "' must be a JSON object");

    std::map<std::string, nlohmann::json> merged;
    for (const auto& [k, v] : j.items()) {
        if (v.is_object()) continue;
        std::string flag = k;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (sub.get_option_no_throw("--" + flag) != nullptr) merged[flag] = v;
    }
    if (j.contains(sub.get_name()) && j[sub.get_name()].is_object()) {
        for (const auto& [k, v] : j[sub.get_name()].items()) {
            std::string flag = k;
            std::replace(flag.begin(), flag.end(), '_', '-');
            if (sub.get_option_no_throw("--" + flag) == nullptr) {
                throw UsageError("config key '" + k + "' is not a flag of '" + sub.get_name() + "'");
            }
            merged[flag] = v;
        }
    }
    std::vector<std::string> args;
    for (const auto& [flag, v] : merged) {
        if (v.is_boolean()) {
            if (v.get<bool>()) args.push_back("--" + flag);
        } else if (v.is_array()) {
            for (const auto& item : v) {
                args.push_back("--" + flag);
                args.push_back(json_scalar(item));
            }
        } else if (!v.is_null()) {
            args.push_back("--" + flag);
            args.push_back(json_scalar(v));
        }
    }
    return args;
}

ModelKind kind_from(const std::string& name) {
    try {
        return parse_model_kind(name);
    } catch (const std::exception&) {
        throw UsageError("unknown model kind '" + name +
                         "' (expected pbm, ubm, vpbm1, vpbm2, vubm1 or vubm2)");
    }
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Click models with vision bias: training, evaluation and simulation", "vbcm"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    std::string config;
    auto add_config = [&config](CLI::App* sub) {
        sub->add_option("--config", config, "JSON file with flag defaults; explicit flags win");
    };

    SplitOptions split;
    auto* s_split = app.add_subcommand("split", "Chronological train/test split with test filtering");
    s_split->add_option("--input", split.input, "Sessions JSONL")->required();
    s_split->add_option("--train-out", split.train_out, "Training sessions output")->required();
    s_split->add_option("--test-out", split.test_out, "Test sessions output")->required();
    s_split->add_option("--fraction", split.fraction, "Training fraction")->capture_default_str();
    bool no_filter = false;
    s_split->add_flag("--no-filter", no_filter, "Keep unseen queries and documents in the test set");
    add_config(s_split);

    TrainOptions train;
    std::string train_kind = "ubm";
    std::string estimator = "standard";
    std::optional<std::uint64_t> train_seed;
    auto* s_train = app.add_subcommand("train", "Fit a click model with standard or regression EM");
    s_train->add_option("--train", train.train, "Training sessions JSONL")->required();
    s_train->add_option("--features", train.features, "Document feature CSV");
    s_train->add_option("--out", train.model_out, "Model JSON output")->required();
    s_train->add_option("--trace", train.trace_out, "Per-iteration CSV output");
    s_train->add_option("--model", train_kind, "pbm, ubm, vpbm1, vpbm2, vubm1, vubm2")->capture_default_str();
    s_train->add_option("--em", estimator, "standard or regression")
        ->check(CLI::IsMember({"standard", "regression"}))
        ->capture_default_str();
    s_train->add_option("--max-iters", train.max_iters, "EM iteration cap");
    s_train->add_option("--tol", train.tol, "Stop when the largest parameter change is below this");
    s_train->add_option("--init-alpha", train.init_alpha);
    s_train->add_option("--init-gamma", train.init_gamma);
    s_train->add_option("--init-sigma", train.init_sigma);
    s_train->add_flag("--fixed-sigma", train.fixed_sigma, "Keep sigma at its initial value");
    s_train->add_option("--mlp-lr", train.mlp.learning_rate)->capture_default_str();
    s_train->add_option("--mlp-epochs", train.mlp.epochs)->capture_default_str();
    s_train->add_option("--mlp-batch", train.mlp.batch_size)->capture_default_str();
    s_train->add_option("--seed", train_seed, "MLP seed");
    s_train->add_option("--threads", train.threads, "0 = VBCM_THREADS or all cores");
    add_config(s_train);

    EvaluateOptions eval;
    auto* s_eval = app.add_subcommand("evaluate", "Metrics of one model, optionally against a baseline");
    s_eval->add_option("--model", eval.model, "Model JSON")->required();
    s_eval->add_option("--test", eval.test, "Test sessions JSONL")->required();
    s_eval->add_option("--train", eval.train, "Training sessions: filters the test set and enables frequency buckets");
    s_eval->add_option("--baseline", eval.baseline, "Baseline model JSON");
    s_eval->add_option("--out-dir", eval.out_dir, "Directory for CSV and markdown tables");
    s_eval->add_option("--max-rank", eval.max_rank)->capture_default_str();
    s_eval->add_option("--threads", eval.threads);
    add_config(s_eval);

    SimulateOptions sim;
    std::string sim_kind = "vubm2";
    auto* s_sim = app.add_subcommand("simulate", "Generate a synthetic click log from known parameters");
    s_sim->add_option("--sessions", sim.sessions_out, "Sessions JSONL output")->required();
    s_sim->add_option("--features", sim.features_out, "Feature CSV output")->required();
    s_sim->add_option("--truth", sim.truth_out, "Ground-truth JSON output")->required();
    s_sim->add_option("--model", sim_kind)->capture_default_str();
    s_sim->add_option("--queries", sim.sim.n_queries)->capture_default_str();
    s_sim->add_option("--docs-per-query", sim.sim.docs_per_query)->capture_default_str();
    s_sim->add_option("--sessions-count", sim.sim.n_sessions)->capture_default_str();
    s_sim->add_option("--min-len", sim.sim.min_len)->capture_default_str();
    s_sim->add_option("--max-len", sim.sim.max_len)->capture_default_str();
    s_sim->add_option("--query-zipf", sim.sim.query_zipf)->capture_default_str();
    s_sim->add_option("--doc-zipf", sim.sim.doc_zipf)->capture_default_str();
    s_sim->add_option("--sigma-weight-norm", sim.sim.sigma_weight_norm)->capture_default_str();
    s_sim->add_option("--sigma-bias", sim.sim.sigma_bias)->capture_default_str();
    s_sim->add_option("--gamma-decay", sim.sim.gamma_decay)->capture_default_str();
    s_sim->add_option("--seed", sim.seed)->capture_default_str();
    s_sim->add_option("--threads", sim.threads);
    add_config(s_sim);

    InspectOptions insp;
    auto* s_insp = app.add_subcommand("inspect", "List documents with the highest and lowest vision bias");
    s_insp->add_option("--model", insp.model, "Model JSON")->required();
    s_insp->add_option("-k,--k", insp.k, "Documents per end")->capture_default_str();
    add_config(s_insp);

    ReportOptions rep;
    auto* s_rep = app.add_subcommand("report", "Comparison tables for several models");
    s_rep->add_option("--model", rep.models, "name=path or path; repeatable")
        ->required()
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    s_rep->add_option("--baseline", rep.baseline, "Name of the baseline model");
    s_rep->add_option("--test", rep.test, "Test sessions JSONL")->required();
    s_rep->add_option("--train", rep.train, "Training sessions: filters the test set and enables frequency buckets");
    s_rep->add_option("--out-dir", rep.out_dir);
    s_rep->add_option("--max-rank", rep.max_rank)->capture_default_str();
    s_rep->add_option("--threads", rep.threads);
    add_config(s_rep);

    // A config file only supplies defaults: its flags go in front of the
    // user's, and single-valued options keep the last occurrence.
    std::vector<std::string> args(argv + 1, argv + argc);
    try {
        auto at = std::find(args.begin(), args.end(), "--config");
        if (at != args.end() && !args.empty()) {
            require(at + 1 != args.end(), "--config needs a path");
            CLI::App* sub = app.get_subcommand_no_throw(args.front());
            require(sub != nullptr, "--config must follow a subcommand");
            auto extra = config_args(*(at + 1), *sub);
            args.insert(args.begin() + 1, extra.begin(), extra.end());
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (s_split->parsed()) {
            split.filter = !no_filter;
            return cmd_split(split, out, err);
        }
        if (s_train->parsed()) {
            train.kind = kind_from(train_kind);
            train.regression = estimator == "regression";
            if (train_seed) train.mlp.seed = *train_seed;
            return cmd_train(train, out, err);
        }
        if (s_eval->parsed()) return cmd_evaluate(eval, out, err);
        if (s_sim->parsed()) {
            sim.kind = kind_from(sim_kind);
            return cmd_simulate(sim, out, err);
        }
        if (s_insp->parsed()) return cmd_inspect(insp, out, err);
        if (s_rep->parsed()) return cmd_report(rep, out, err);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

}  // namespace vbcm::cli
