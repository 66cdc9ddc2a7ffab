#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vbcm/clicklog.hpp"

namespace vbcm {

/// Fully connected layer; weights are row-major [out][in].
struct DenseLayer {
    std::size_t in = 0;
    std::size_t out = 0;
    std::vector<double> weights;
    std::vector<double> bias;

    DenseLayer() = default;
    DenseLayer(std::size_t in_dim, std::size_t out_dim)
        : in(in_dim), out(out_dim), weights(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

    [[nodiscard]] double& w(std::size_t o, std::size_t i) { return weights[o * in + i]; }
    [[nodiscard]] double w(std::size_t o, std::size_t i) const { return weights[o * in + i]; }

    friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

/// Sigmoid hidden layers, two-way softmax output. Class 1 is "positive".
class Mlp {
public:
    static constexpr std::array<std::size_t, 4> kDefaultShape = {kFeatureDim, 16, 8, 2};

    /// All weights and biases zero.
    Mlp() : Mlp(std::vector<std::size_t>(kDefaultShape.begin(), kDefaultShape.end())) {}
    explicit Mlp(const std::vector<std::size_t>& shape);

    /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
    static Mlp glorot(std::uint64_t seed,
                      const std::vector<std::size_t>& shape = {kDefaultShape.begin(),
                                                               kDefaultShape.end()});

    [[nodiscard]] std::vector<std::size_t> shape() const;
    [[nodiscard]] std::size_t input_dim() const noexcept { return layers_.front().in; }
    [[nodiscard]] std::vector<DenseLayer>& layers() noexcept { return layers_; }
    [[nodiscard]] const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    /// Total number of weights and biases.
    [[nodiscard]] std::size_t parameter_count() const noexcept;

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    std::vector<DenseLayer> layers_;
};

/// Layer activations kept for backprop. activations[0] is the input,
/// activations.back() the softmax output.
struct MlpCache {
    std::vector<std::vector<double>> activations;
};

struct MlpOutput {
    double p_pos = 0.5;
    double p_neg = 0.5;
    MlpCache cache;
};

/// Throws std::invalid_argument on a dimension mismatch or non-finite input.
MlpOutput mlp_forward(const Mlp& m, std::span<const double> x);

/// Positive-class probability only.
double mlp_predict(const Mlp& m, std::span<const double> x);

/// Cross-entropy -ln p(label | x).
double mlp_loss(const Mlp& m, std::span<const double> x, int label);

/// Gradient of mlp_loss with respect to every weight and bias, shaped like m.
Mlp mlp_gradient(const Mlp& m, const MlpCache& cache, int label);

struct LabeledSample {
    FeatureVector features{};
    int label = 0;
    std::string doc;
};

struct MlpTrainConfig {
    double learning_rate = 0.05;
    int epochs = 100;
    std::size_t batch_size = 128;
    std::uint64_t seed = 42;
};

/// Mini-batch gradient descent on mean cross-entropy, no momentum. Shuffling
/// is driven by cfg.seed only. Throws std::invalid_argument on empty data.
Mlp mlp_train(Mlp m, std::span<const LabeledSample> data, const MlpTrainConfig& cfg);

}  // namespace vbcm
