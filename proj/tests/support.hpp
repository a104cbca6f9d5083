#pragma once

// Test-only reference implementations, written with plain loops so they share
// no code path with the Eigen-based library.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "neural.hpp"

namespace gvdn::testing {

struct NaiveNet {
    std::vector<int> sizes;
    std::vector<std::vector<double>> w;  // per layer, row-major out x in
    std::vector<std::vector<double>> b;

    static NaiveNet from(const MlpParams<double>& p) {
        NaiveNet n;
        n.sizes = p.layer_sizes();
        for (const auto& l : p.layers) {
            std::vector<double> wk;
            for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
                for (Eigen::Index c = 0; c < l.weights.cols(); ++c) wk.push_back(l.weights(r, c));
            }
            n.w.push_back(std::move(wk));
            n.b.emplace_back(l.biases.data(), l.biases.data() + l.biases.size());
        }
        return n;
    }

    /// Output vector; `min_abs_preact` receives the smallest |pre-activation| over hidden units.
    std::vector<double> forward(const std::vector<double>& x, double* min_abs_preact = nullptr) const {
        std::vector<double> a = x;
        double smallest = INFINITY;
        for (std::size_t k = 0; k < w.size(); ++k) {
            const int in = sizes[k], out = sizes[k + 1];
            std::vector<double> z(static_cast<std::size_t>(out));
            for (int r = 0; r < out; ++r) {
                double s = b[k][static_cast<std::size_t>(r)];
                for (int c = 0; c < in; ++c) s += w[k][static_cast<std::size_t>(r * in + c)] * a[static_cast<std::size_t>(c)];
                if (k + 1 < w.size()) {
                    smallest = std::min(smallest, std::abs(s));
                    s = std::max(s, 0.0);
                }
                z[static_cast<std::size_t>(r)] = s;
            }
            a = std::move(z);
        }
        if (min_abs_preact) *min_abs_preact = smallest;
        return a;
    }
};

/// Location of one scalar parameter.
struct ParamRef {
    std::size_t layer;
    bool is_bias;
    std::size_t index;  // row-major into weights, or into biases
};

inline double& param(NaiveNet& n, const ParamRef& r) {
    return r.is_bias ? n.b[r.layer][r.index] : n.w[r.layer][r.index];
}

inline double analytic(const GradientSet<double>& g, const NaiveNet& shape, const ParamRef& r) {
    const auto& l = g.layers[r.layer];
    if (r.is_bias) return l.biases(static_cast<Eigen::Index>(r.index));
    const auto in = static_cast<std::size_t>(shape.sizes[r.layer]);
    return l.weights(static_cast<Eigen::Index>(r.index / in), static_cast<Eigen::Index>(r.index % in));
}

/// Central difference of (y - Q(x, a))^2 with y fixed so that the error at the unperturbed point is e_td.
inline double numeric(NaiveNet n, const ParamRef& r, const std::vector<double>& x, std::size_t action, double e_td,
                      double h = 1e-5) {
    const double q0 = n.forward(x)[action];
    const double y = q0 + e_td;
    double& p = param(n, r);
    const double orig = p;
    p = orig + h;
    const double lp = std::pow(y - n.forward(x)[action], 2);
    p = orig - h;
    const double lm = std::pow(y - n.forward(x)[action], 2);
    p = orig;
    return (lp - lm) / (2 * h);
}

inline double relative_error(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

inline std::vector<ParamRef> all_params(const NaiveNet& n) {
    std::vector<ParamRef> out;
    for (std::size_t k = 0; k < n.w.size(); ++k) {
        for (std::size_t i = 0; i < n.w[k].size(); ++i) out.push_back({k, false, i});
        for (std::size_t i = 0; i < n.b[k].size(); ++i) out.push_back({k, true, i});
    }
    return out;
}

/// Random observation-like input whose hidden pre-activations all stay at least `margin` from the ReLU kink.
template <class Rng>
std::vector<double> input_away_from_kinks(const NaiveNet& n, Rng& rng, double margin = 1e-3) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (;;) {
        std::vector<double> x{u(rng), u(rng), u(rng)};
        double smallest = 0.0;
        n.forward(x, &smallest);
        if (smallest >= margin) return x;
    }
}

}  // namespace gvdn::testing
