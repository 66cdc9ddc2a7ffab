#include "vbcm/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace vbcm {

namespace {

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void forward_into(const Mlp& m, std::span<const double> x, MlpCache& cache) {
    const auto& layers = m.layers();
    cache.activations.resize(layers.size() + 1);
    cache.activations[0].assign(x.begin(), x.end());
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const DenseLayer& layer = layers[l];
        const auto& in = cache.activations[l];
        auto& out = cache.activations[l + 1];
        out.resize(layer.out);
        for (std::size_t o = 0; o < layer.out; ++o) {
            double z = layer.bias[o];
            const double* row = &layer.weights[o * layer.in];
            for (std::size_t i = 0; i < layer.in; ++i) z += row[i] * in[i];
            out[o] = z;
        }
        if (l + 1 < layers.size()) {
            for (double& v : out) v = sigmoid(v);
        } else {
            const double zmax = *std::max_element(out.begin(), out.end());
            double total = 0.0;
            for (double& v : out) {
                v = std::exp(v - zmax);
                total += v;
            }
            for (double& v : out) v /= total;
        }
    }
}

// grad += d loss / d params for one sample.
void accumulate_gradient(const Mlp& m, const MlpCache& cache, int label, Mlp& grad,
                         std::vector<double>& delta, std::vector<double>& next_delta) {
    const auto& layers = m.layers();
    const std::size_t n_layers = layers.size();
    const auto& probs = cache.activations.back();
    delta.assign(probs.begin(), probs.end());
    delta[static_cast<std::size_t>(label)] -= 1.0;

    for (std::size_t l = n_layers; l-- > 0;) {
        const DenseLayer& layer = layers[l];
        DenseLayer& g = grad.layers()[l];
        const auto& in = cache.activations[l];
        for (std::size_t o = 0; o < layer.out; ++o) {
            g.bias[o] += delta[o];
            double* grow = &g.weights[o * layer.in];
            for (std::size_t i = 0; i < layer.in; ++i) grow[i] += delta[o] * in[i];
        }
        if (l == 0) break;
        next_delta.assign(layer.in, 0.0);
        for (std::size_t o = 0; o < layer.out; ++o) {
            const double* row = &layer.weights[o * layer.in];
            for (std::size_t i = 0; i < layer.in; ++i) next_delta[i] += row[i] * delta[o];
        }
        for (std::size_t i = 0; i < layer.in; ++i) next_delta[i] *= in[i] * (1.0 - in[i]);
        delta.swap(next_delta);
    }
}

void check_input(const Mlp& m, std::span<const double> x) {
    if (x.size() != m.input_dim()) {
        throw std::invalid_argument("MLP expects " + std::to_string(m.input_dim()) +
                                    " inputs, got " + std::to_string(x.size()));
    }
    for (double v : x) {
        if (!std::isfinite(v)) throw std::invalid_argument("MLP input is not finite");
    }
}

}  // namespace

Mlp::Mlp(const std::vector<std::size_t>& shape) {
    if (shape.size() < 2) throw std::invalid_argument("MLP needs at least an input and output size");
    if (shape.back() != 2) throw std::invalid_argument("MLP output layer must have 2 units");
    for (std::size_t i = 0; i + 1 < shape.size(); ++i) {
        if (shape[i] == 0) throw std::invalid_argument("MLP layer size must be positive");
        layers_.emplace_back(shape[i], shape[i + 1]);
    }
}

Mlp Mlp::glorot(std::uint64_t seed, const std::vector<std::size_t>& shape) {
    Mlp m(shape);
    std::mt19937_64 rng(seed);
    for (auto& layer : m.layers_) {
        const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (double& w : layer.weights) w = dist(rng);
    }
    return m;
}

std::vector<std::size_t> Mlp::shape() const {
    std::vector<std::size_t> s;
    s.push_back(layers_.front().in);
    for (const auto& l : layers_) s.push_back(l.out);
    return s;
}

std::size_t Mlp::parameter_count() const noexcept {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
    return n;
}

MlpOutput mlp_forward(const Mlp& m, std::span<const double> x) {
    check_input(m, x);
    MlpOutput out;
    forward_into(m, x, out.cache);
    out.p_neg = out.cache.activations.back()[0];
    out.p_pos = out.cache.activations.back()[1];
    return out;
}

double mlp_predict(const Mlp& m, std::span<const double> x) { return mlp_forward(m, x).p_pos; }

double mlp_loss(const Mlp& m, std::span<const double> x, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
    const auto out = mlp_forward(m, x);
    return -std::log(label == 1 ? out.p_pos : out.p_neg);
}

Mlp mlp_gradient(const Mlp& m, const MlpCache& cache, int label) {
    if (label != 0 && label != 1) throw std::invalid_argument("label must be 0 or 1");
    Mlp grad(m.shape());
    std::vector<double> delta;
    std::vector<double> next;
    accumulate_gradient(m, cache, label, grad, delta, next);
    return grad;
}

Mlp mlp_train(Mlp m, std::span<const LabeledSample> data, const MlpTrainConfig& cfg) {
    if (data.empty()) throw std::invalid_argument("cannot train an MLP on no samples");
    if (!(cfg.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
    if (cfg.batch_size == 0) throw std::invalid_argument("batch size must be positive");
    if (cfg.epochs < 0) throw std::invalid_argument("epochs must be non-negative");
    for (const auto& s : data) {
        check_input(m, s.features);
        if (s.label != 0 && s.label != 1) throw std::invalid_argument("label must be 0 or 1");
    }

    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Mlp grad(m.shape());
    MlpCache cache;
    std::vector<double> delta;
    std::vector<double> next;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            for (auto& layer : grad.layers()) {
                std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
                std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
            }
            for (std::size_t k = start; k < stop; ++k) {
                const auto& s = data[order[k]];
                forward_into(m, s.features, cache);
                accumulate_gradient(m, cache, s.label, grad, delta, next);
            }
            const double step = cfg.learning_rate / static_cast<double>(stop - start);
            for (std::size_t l = 0; l < m.layers().size(); ++l) {
                auto& layer = m.layers()[l];
                const auto& g = grad.layers()[l];
                for (std::size_t i = 0; i < layer.weights.size(); ++i) layer.weights[i] -= step * g.weights[i];
                for (std::size_t i = 0; i < layer.bias.size(); ++i) layer.bias[i] -= step * g.bias[i];
            }
        }
    }
    return m;
}

}  // namespace vbcm
