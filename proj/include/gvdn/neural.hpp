#pragma once

// Dense ReLU Q-network with hand-written backpropagation and Adam.
// Architecture: input(3) -> hidden... (ReLU) -> output(5), linear output layer.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "json.hpp"
#include "switch_env.hpp"

namespace gvdn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

inline const std::vector<int> kDefaultLayerSizes{static_cast<int>(kObsDim), 128, 128, static_cast<int>(kNumActions)};

template <typename Scalar>
struct DenseLayer {
    Matrix<Scalar> weights;  // out x in
    Vector<Scalar> biases;

    friend bool operator==(const DenseLayer& a, const DenseLayer& b) {
        return a.weights.rows() == b.weights.rows() && a.weights.cols() == b.weights.cols() &&
               a.weights == b.weights && a.biases == b.biases;
    }
};

namespace detail {

template <typename Scalar>
std::vector<DenseLayer<Scalar>> zero_layers(const std::vector<DenseLayer<Scalar>>& like) {
    std::vector<DenseLayer<Scalar>> out;
    out.reserve(like.size());
    for (const auto& l : like) {
        out.push_back({Matrix<Scalar>::Zero(l.weights.rows(), l.weights.cols()), Vector<Scalar>::Zero(l.biases.size())});
    }
    return out;
}

template <typename Scalar>
bool same_shapes(const std::vector<DenseLayer<Scalar>>& a, const std::vector<DenseLayer<Scalar>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].weights.rows() != b[k].weights.rows() || a[k].weights.cols() != b[k].weights.cols() ||
            a[k].biases.size() != b[k].biases.size()) {
            return false;
        }
    }
    return true;
}

}  // namespace detail

template <typename Scalar>
struct MlpParams {
    std::vector<DenseLayer<Scalar>> layers;

    std::vector<int> layer_sizes() const {
        std::vector<int> sizes;
        if (layers.empty()) return sizes;
        sizes.push_back(static_cast<int>(layers.front().weights.cols()));
        for (const auto& l : layers) sizes.push_back(static_cast<int>(l.weights.rows()));
        return sizes;
    }

    std::size_t num_params() const {
        std::size_t total = 0;
        for (const auto& l : layers) total += static_cast<std::size_t>(l.weights.size() + l.biases.size());
        return total;
    }

    bool all_finite() const {
        for (const auto& l : layers) {
            if (!l.weights.allFinite() || !l.biases.allFinite()) return false;
        }
        return true;
    }

    friend bool operator==(const MlpParams&, const MlpParams&) = default;
};

template <typename Scalar>
struct GradientSet {
    std::vector<DenseLayer<Scalar>> layers;

    static GradientSet zeros_like(const MlpParams<Scalar>& p) { return {detail::zero_layers(p.layers)}; }
    friend bool operator==(const GradientSet&, const GradientSet&) = default;
};

template <typename Scalar>
struct AdamState {
    std::vector<DenseLayer<Scalar>> first_moment;
    std::vector<DenseLayer<Scalar>> second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamState for_params(const MlpParams<Scalar>& p) {
        return {detail::zero_layers(p.layers), detail::zero_layers(p.layers)};
    }
    friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// Uniform(-sqrt(6/fan_in), +sqrt(6/fan_in)) weights, zero biases. Deterministic in `seed`.
template <typename Scalar = double>
MlpParams<Scalar> init_mlp(std::uint64_t seed, const std::vector<int>& layer_sizes = kDefaultLayerSizes) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("network needs at least an input and an output layer");
    std::mt19937_64 rng(seed);
    MlpParams<Scalar> p;
    for (std::size_t k = 0; k + 1 < layer_sizes.size(); ++k) {
        const int fan_in = layer_sizes[k], fan_out = layer_sizes[k + 1];
        if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("layer sizes must be positive");
        const double limit = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer<Scalar> layer{Matrix<Scalar>(fan_out, fan_in), Vector<Scalar>::Zero(fan_out)};
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = static_cast<Scalar>(dist(rng));
        }
        p.layers.push_back(std::move(layer));
    }
    return p;
}

template <typename Scalar>
MlpParams<Scalar> zero_mlp(const std::vector<int>& layer_sizes = kDefaultLayerSizes) {
    MlpParams<Scalar> p = init_mlp<Scalar>(0, layer_sizes);
    for (auto& l : p.layers) l.weights.setZero();
    return p;
}

template <typename Scalar>
MlpParams<Scalar> copy_params(const MlpParams<Scalar>& src) {
    return src;
}

template <typename To, typename From>
MlpParams<To> cast_params(const MlpParams<From>& p) {
    MlpParams<To> out;
    for (const auto& l : p.layers) out.layers.push_back({l.weights.template cast<To>(), l.biases.template cast<To>()});
    return out;
}

/// Activations of every layer for a batch; column b is sample b. activations[0] is the input.
template <typename Scalar>
struct ForwardCache {
    std::vector<Matrix<Scalar>> activations;
};

/// Batched forward pass over the columns of `inputs`; returns output-by-batch Q-values.
template <typename Scalar>
Matrix<Scalar> forward_batch(const MlpParams<Scalar>& p, const Matrix<Scalar>& inputs,
                             ForwardCache<Scalar>* cache = nullptr) {
    if (p.layers.empty()) throw std::invalid_argument("empty network");
    if (inputs.rows() != p.layers.front().weights.cols()) throw std::invalid_argument("input dimension mismatch");
    if (cache) {
        cache->activations.clear();
        cache->activations.push_back(inputs);
    }
    Matrix<Scalar> a = inputs;
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        const auto& layer = p.layers[k];
        Matrix<Scalar> z = layer.weights * a;
        z.colwise() += layer.biases;
        if (k + 1 < p.layers.size()) z = z.cwiseMax(Scalar(0));
        a = std::move(z);
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

template <typename Scalar>
Vector<Scalar> observation_vector(const Observation& obs) {
    Vector<Scalar> x(3);
    x << static_cast<Scalar>(obs.row_norm), static_cast<Scalar>(obs.col_norm), static_cast<Scalar>(obs.time_norm);
    return x;
}

template <typename Scalar>
Matrix<Scalar> observation_matrix(std::span<const Observation> batch) {
    Matrix<Scalar> x(3, static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) x.col(static_cast<Eigen::Index>(b)) = observation_vector<Scalar>(batch[b]);
    return x;
}

using QValues = std::array<double, kNumActions>;

template <typename Scalar>
QValues forward(const MlpParams<Scalar>& p, const Observation& obs) {
    if (!std::isfinite(obs.row_norm) || !std::isfinite(obs.col_norm) || !std::isfinite(obs.time_norm)) {
        throw std::domain_error("non-finite observation");
    }
    const Matrix<Scalar> out = forward_batch(p, Matrix<Scalar>(observation_vector<Scalar>(obs)));
    if (out.rows() != static_cast<Eigen::Index>(kNumActions)) throw std::invalid_argument("network output is not 5 actions");
    QValues q{};
    for (std::size_t a = 0; a < kNumActions; ++a) q[a] = static_cast<double>(out(static_cast<Eigen::Index>(a), 0));
    return q;
}

/// Backpropagates `output_grad` (d loss / d output, same shape as the output batch).
template <typename Scalar>
GradientSet<Scalar> backward_batch(const MlpParams<Scalar>& p, const ForwardCache<Scalar>& cache,
                                   const Matrix<Scalar>& output_grad) {
    const std::size_t depth = p.layers.size();
    if (cache.activations.size() != depth + 1) throw std::invalid_argument("forward cache does not match network");
    GradientSet<Scalar> g;
    g.layers.resize(depth);
    Matrix<Scalar> delta = output_grad;
    for (std::size_t k = depth; k-- > 0;) {
        const Matrix<Scalar>& input = cache.activations[k];
        g.layers[k].weights.noalias() = delta * input.transpose();
        g.layers[k].biases = delta.rowwise().sum();
        if (k > 0) {
            Matrix<Scalar> back = p.layers[k].weights.transpose() * delta;
            delta = back.cwiseProduct((input.array() > Scalar(0)).template cast<Scalar>().matrix());
        }
    }
    return g;
}

/// d(e_td^2)/d(params) for one sample, with the target held constant:
/// only the chosen action's output receives upstream gradient -2 e_td.
template <typename Scalar>
GradientSet<Scalar> grad_squared_td(const MlpParams<Scalar>& p, const Observation& obs, Action action, double e_td) {
    ForwardCache<Scalar> cache;
    const Matrix<Scalar> out = forward_batch(p, Matrix<Scalar>(observation_vector<Scalar>(obs)), &cache);
    Matrix<Scalar> upstream = Matrix<Scalar>::Zero(out.rows(), 1);
    upstream(static_cast<Eigen::Index>(to_index(action)), 0) = static_cast<Scalar>(-2.0 * e_td);
    return backward_batch(p, cache, upstream);
}

/// One Adam update with bias correction, in place.
template <typename Scalar>
void adam_step(MlpParams<Scalar>& p, const GradientSet<Scalar>& g, AdamState<Scalar>& st, double lr) {
    if (!detail::same_shapes(p.layers, g.layers) || !detail::same_shapes(p.layers, st.first_moment) ||
        !detail::same_shapes(p.layers, st.second_moment)) {
        throw std::invalid_argument("adam_step: shape mismatch");
    }
    st.step += 1;
    const auto b1 = static_cast<Scalar>(st.beta1), b2 = static_cast<Scalar>(st.beta2);
    const auto c1 = static_cast<Scalar>(1.0 - std::pow(st.beta1, static_cast<double>(st.step)));
    const auto c2 = static_cast<Scalar>(1.0 - std::pow(st.beta2, static_cast<double>(st.step)));
    const auto rate = static_cast<Scalar>(lr), eps = static_cast<Scalar>(st.epsilon);
    auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
        m = b1 * m + (Scalar(1) - b1) * grad;
        v = b2 * v + (Scalar(1) - b2) * grad.cwiseProduct(grad);
        param.array() -= rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    };
    for (std::size_t k = 0; k < p.layers.size(); ++k) {
        update(p.layers[k].weights, g.layers[k].weights, st.first_moment[k].weights, st.second_moment[k].weights);
        update(p.layers[k].biases, g.layers[k].biases, st.first_moment[k].biases, st.second_moment[k].biases);
    }
}

// Checkpoint layout: {"format":"gvdn-mlp","version":1,"layer_sizes":[...],
//                     "layers":[{"weights":[row-major], "biases":[...]}, ...]}

template <typename Scalar>
nlohmann::json params_to_json(const MlpParams<Scalar>& p) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : p.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(l.weights.size()));
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(static_cast<double>(l.weights(r, c)));
        }
        std::vector<double> b(l.biases.data(), l.biases.data() + l.biases.size());
        layers.push_back({{"weights", w}, {"biases", b}});
    }
    return {{"format", "gvdn-mlp"}, {"version", 1}, {"layer_sizes", p.layer_sizes()}, {"layers", layers}};
}

template <typename Scalar = double>
MlpParams<Scalar> params_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "gvdn-mlp" || j.value("version", 0) != 1) {
        throw std::invalid_argument("not a version-1 gvdn-mlp checkpoint");
    }
    const auto sizes = j.at("layer_sizes").get<std::vector<int>>();
    const auto& layers = j.at("layers");
    if (sizes.size() < 2 || layers.size() != sizes.size() - 1) throw std::invalid_argument("checkpoint layer count mismatch");
    MlpParams<Scalar> p;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
        const auto w = layers[k].at("weights").get<std::vector<double>>();
        const auto b = layers[k].at("biases").get<std::vector<double>>();
        const int in = sizes[k], out = sizes[k + 1];
        if (w.size() != static_cast<std::size_t>(in * out) || b.size() != static_cast<std::size_t>(out)) {
            throw std::invalid_argument("checkpoint layer shape mismatch");
        }
        DenseLayer<Scalar> layer{Matrix<Scalar>(out, in), Vector<Scalar>(out)};
        for (int r = 0; r < out; ++r) {
            for (int c = 0; c < in; ++c) layer.weights(r, c) = static_cast<Scalar>(w[static_cast<std::size_t>(r * in + c)]);
            layer.biases(r) = static_cast<Scalar>(b[static_cast<std::size_t>(r)]);
        }
        p.layers.push_back(std::move(layer));
    }
    if (!p.all_finite()) throw std::invalid_argument("checkpoint contains non-finite values");
    return p;
}

}  // namespace gvdn
