#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vbcm/em.hpp"
#include "vbcm/mlp.hpp"
#include "vbcm/models.hpp"
#include "vbcm/synth.hpp"

namespace vbcm::cli {

struct SplitOptions {
    std::string input;
    std::string train_out;
    std::string test_out;
    double fraction = 0.75;
    /// Apply the unseen query / unseen document rule to the test part.
    bool filter = true;
};

struct TrainOptions {
    std::string train;
    std::string features;  // required for regression EM
    std::string model_out;
    std::string trace_out;  // optional
    ModelKind kind = ModelKind::UBM;
    bool regression = false;
    /// Unset fields fall back to EmConfig::defaults_for(kind).
    std::optional<int> max_iters;
    std::optional<double> tol;
    std::optional<double> init_alpha;
    std::optional<double> init_gamma;
    std::optional<double> init_sigma;
    bool fixed_sigma = false;
    MlpTrainConfig mlp;
    std::size_t threads = 0;
};

struct EvaluateOptions {
    std::string model;
    std::string test;
    /// When set: test sessions are filtered against it and metrics are broken
    /// down by its query frequencies.
    std::string train;
    std::string baseline;  // optional second model file
    std::string out_dir;   // optional; tables are always printed as markdown
    int max_rank = 10;
    std::size_t threads = 0;
};

struct SimulateOptions {
    std::string sessions_out;
    std::string features_out;
    std::string truth_out;
    ModelKind kind = ModelKind::VUBM2;
    SimConfig sim;
    std::uint64_t seed = 1;
    std::size_t threads = 0;
};

struct InspectOptions {
    std::string model;
    std::size_t k = 10;
};

struct ReportOptions {
    /// "name=path" pairs; name defaults to the model label when omitted.
    std::vector<std::string> models;
    std::string baseline;  // a model name
    std::string test;
    std::string train;
    std::string out_dir;
    int max_rank = 10;
    std::size_t threads = 0;
};

int cmd_split(const SplitOptions& o, std::ostream& out, std::ostream& err);
int cmd_train(const TrainOptions& o, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateOptions& o, std::ostream& out, std::ostream& err);
int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream& err);
int cmd_inspect(const InspectOptions& o, std::ostream& out, std::ostream& err);
int cmd_report(const ReportOptions& o, std::ostream& out, std::ostream& err);

/// Full command line: `vbcm <subcommand> [flags]`, with `--config FILE`
/// supplying defaults that explicit flags override.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vbcm::cli
