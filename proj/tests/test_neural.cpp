#include <gtest/gtest.h>

#include <random>

#include "neural.hpp"
#include "support.hpp"

using namespace gvdn;
using gvdn::testing::NaiveNet;

namespace {

MlpParams<double> random_params(std::uint64_t seed, const std::vector<int>& sizes = kDefaultLayerSizes) {
    auto p = init_mlp<double>(seed, sizes);
    std::mt19937_64 rng(seed ^ 0xabcdef);
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    for (auto& l : p.layers) {
        for (Eigen::Index i = 0; i < l.biases.size(); ++i) l.biases(i) = u(rng);
    }
    return p;
}

Observation obs_of(const std::vector<double>& x) { return {x[0], x[1], x[2]}; }

}  // namespace

TEST(Init, DeterministicZeroBiasBounded) {
    const auto a = init_mlp<double>(42), b = init_mlp<double>(42), c = init_mlp<double>(43);
    EXPECT_EQ(a, b);
    EXPECT_FALSE(a == c);
    ASSERT_EQ(a.layer_sizes(), (std::vector<int>{3, 128, 128, 5}));
    for (const auto& l : a.layers) {
        EXPECT_TRUE(l.biases.isZero(0.0));
        const double limit = std::sqrt(6.0 / static_cast<double>(l.weights.cols()));
        EXPECT_LE(l.weights.cwiseAbs().maxCoeff(), limit);
    }
    EXPECT_EQ(a.num_params(), 3u * 128 + 128 + 128 * 128 + 128 + 128 * 5 + 5);
}

TEST(Forward, ZeroNetwork) {
    const auto p = zero_mlp<double>();
    const auto q = forward(p, Observation{0.3, 0.2, 0.1});
    for (double x : q) EXPECT_EQ(x, 0.0);
}

TEST(Forward, OutputLayerLinearity) {
    auto p = random_params(1);
    const Observation o{0.5, 1.0 / 6.0, 0.2};
    const auto q = forward(p, o);
    p.layers.back().weights *= 2.0;
    p.layers.back().biases *= 2.0;
    const auto q2 = forward(p, o);
    for (std::size_t a = 0; a < kNumActions; ++a) EXPECT_DOUBLE_EQ(q2[a], 2.0 * q[a]);
}

TEST(Forward, MatchesNaiveAndRejectsNonFinite) {
    const auto p = random_params(2);
    const NaiveNet naive = NaiveNet::from(p);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int k = 0; k < 50; ++k) {
        std::vector<double> x{u(rng), u(rng), u(rng)};
        const auto q = forward(p, obs_of(x));
        const auto ref = naive.forward(x);
        for (std::size_t a = 0; a < kNumActions; ++a) {
            EXPECT_NEAR(q[a], ref[a], 1e-12 * std::max(1.0, std::abs(ref[a])));
            EXPECT_TRUE(std::isfinite(q[a]));
        }
        EXPECT_EQ(q, forward(p, obs_of(x)));
    }
    EXPECT_THROW(forward(p, Observation{NAN, 0.0, 0.0}), std::domain_error);
    EXPECT_THROW(forward(p, Observation{0.0, INFINITY, 0.0}), std::domain_error);
}

TEST(Gradient, ZeroErrorGivesZeroGradient) {
    const auto p = random_params(4);
    const auto g = grad_squared_td(p, Observation{0.5, 0.5, 0.5}, Action::Up, 0.0);
    for (const auto& l : g.layers) {
        EXPECT_TRUE(l.weights.isZero(0.0));
        EXPECT_TRUE(l.biases.isZero(0.0));
    }
}

TEST(Gradient, OnlyChosenHeadRowIsNonZero) {
    const auto p = random_params(5);
    const auto g = grad_squared_td(p, Observation{0.5, 0.5, 0.5}, Action::Down, 1.3);
    const auto& out = g.layers.back();
    for (Eigen::Index a = 0; a < out.weights.rows(); ++a) {
        if (a == static_cast<Eigen::Index>(to_index(Action::Down))) {
            EXPECT_NE(out.biases(a), 0.0);
        } else {
            EXPECT_TRUE(out.weights.row(a).isZero(0.0));
            EXPECT_EQ(out.biases(a), 0.0);
        }
    }
    EXPECT_DOUBLE_EQ(out.biases(static_cast<Eigen::Index>(to_index(Action::Down))), -2.0 * 1.3);
}

// Every parameter against central differences, on a small net and on the full-size net.
TEST(Gradient, FiniteDifferenceEveryComponent) {
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<std::size_t> act(0, kNumActions - 1);
    std::uniform_real_distribution<double> err(-3.0, 3.0);
    const std::vector<std::vector<int>> shapes{{3, 8, 8, 5}, {3, 8, 8, 5}, {3, 8, 8, 5}, kDefaultLayerSizes};
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        const auto p = random_params(100 + s, shapes[s]);
        const NaiveNet naive = NaiveNet::from(p);
        const auto x = gvdn::testing::input_away_from_kinks(naive, rng);
        const std::size_t a = act(rng);
        const double e = err(rng);
        const auto g = grad_squared_td(p, obs_of(x), action_from_index(a), e);
        double worst = 0.0;
        for (const auto& ref : gvdn::testing::all_params(naive)) {
            const double an = gvdn::testing::analytic(g, naive, ref);
            const double num = gvdn::testing::numeric(naive, ref, x, a, e);
            worst = std::max(worst, gvdn::testing::relative_error(an, num));
        }
        EXPECT_LE(worst, 1e-4) << "shape " << s;
    }
}

TEST(Gradient, BatchEqualsSumOfSingles) {
    const auto p = random_params(6);
    std::vector<Observation> obs{{0.0, 0.1, 0.2}, {0.5, 0.9, 0.4}, {1.0, 0.3, 0.8}};
    std::vector<std::size_t> acts{0, 3, 3};
    std::vector<double> errs{0.4, -1.1, 2.0};
    ForwardCache<double> cache;
    forward_batch(p, observation_matrix<double>(obs), &cache);
    Matrix<double> up = Matrix<double>::Zero(5, 3);
    for (Eigen::Index k = 0; k < 3; ++k) up(static_cast<Eigen::Index>(acts[static_cast<std::size_t>(k)]), k) = -2.0 * errs[static_cast<std::size_t>(k)];
    const auto batch = backward_batch(p, cache, up);
    auto total = GradientSet<double>::zeros_like(p);
    for (std::size_t k = 0; k < 3; ++k) {
        const auto g = grad_squared_td(p, obs[k], action_from_index(acts[k]), errs[k]);
        for (std::size_t l = 0; l < g.layers.size(); ++l) {
            total.layers[l].weights += g.layers[l].weights;
            total.layers[l].biases += g.layers[l].biases;
        }
    }
    for (std::size_t l = 0; l < total.layers.size(); ++l) {
        EXPECT_TRUE(batch.layers[l].weights.isApprox(total.layers[l].weights, 1e-12));
        EXPECT_TRUE(batch.layers[l].biases.isApprox(total.layers[l].biases, 1e-12));
    }
}

TEST(Adam, ZeroGradientLeavesParams) {
    auto p = random_params(7);
    const auto before = p;
    auto st = AdamState<double>::for_params(p);
    adam_step(p, GradientSet<double>::zeros_like(p), st, 1e-3);
    EXPECT_EQ(p, before);
    EXPECT_EQ(st.step, 1u);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
    MlpParams<double> p{{DenseLayer<double>{Matrix<double>::Zero(1, 1), Vector<double>::Zero(1)}}};
    GradientSet<double> g{{DenseLayer<double>{Matrix<double>::Constant(1, 1, 1.0), Vector<double>::Zero(1)}}};
    auto st = AdamState<double>::for_params(p);
    adam_step(p, g, st, 0.001);
    EXPECT_NEAR(p.layers[0].weights(0, 0), -0.001, 1e-10);
    // Reference: m = 0.1, v = 0.001, m_hat = 1, v_hat = 1.
    EXPECT_DOUBLE_EQ(p.layers[0].weights(0, 0), -0.001 * 1.0 / (1.0 + 1e-8));
}

TEST(Adam, MatchesScalarReferenceOverSteps) {
    MlpParams<double> p{{DenseLayer<double>{Matrix<double>::Constant(1, 1, 0.3), Vector<double>::Zero(1)}}};
    auto st = AdamState<double>::for_params(p);
    double w = 0.3, m = 0, v = 0;
    const std::vector<double> grads{0.5, -0.2, 1.5, 0.0, -3.0};
    for (std::size_t k = 0; k < grads.size(); ++k) {
        GradientSet<double> g{{DenseLayer<double>{Matrix<double>::Constant(1, 1, grads[k]), Vector<double>::Zero(1)}}};
        adam_step(p, g, st, 0.01);
        m = 0.9 * m + 0.1 * grads[k];
        v = 0.999 * v + 0.001 * grads[k] * grads[k];
        const double mh = m / (1 - std::pow(0.9, k + 1)), vh = v / (1 - std::pow(0.999, k + 1));
        w -= 0.01 * mh / (std::sqrt(vh) + 1e-8);
        EXPECT_NEAR(p.layers[0].weights(0, 0), w, 1e-15);
    }
    for (const auto& l : st.second_moment) EXPECT_GE(l.weights.minCoeff(), 0.0);
}

TEST(Adam, DeterministicAndShapeChecked) {
    auto p1 = random_params(8), p2 = random_params(8);
    auto s1 = AdamState<double>::for_params(p1), s2 = AdamState<double>::for_params(p2);
    const auto g = grad_squared_td(p1, Observation{0.2, 0.4, 0.6}, Action::Left, 0.7);
    for (int k = 0; k < 3; ++k) {
        adam_step(p1, g, s1, 1e-3);
        adam_step(p2, g, s2, 1e-3);
    }
    EXPECT_EQ(p1, p2);
    auto small = init_mlp<double>(1, {3, 4, 5});
    EXPECT_THROW(adam_step(small, g, s1, 1e-3), std::invalid_argument);
}

TEST(Adam, LossDescent) {
    auto p = random_params(9);
    auto st = AdamState<double>::for_params(p);
    const Observation o{0.5, 0.5, 0.3};
    const double target = forward(p, o)[2] + 1.0;
    const double before = std::pow(target - forward(p, o)[2], 2);
    adam_step(p, grad_squared_td(p, o, Action::Up, target - forward(p, o)[2]), st, 1e-4);
    EXPECT_LT(std::pow(target - forward(p, o)[2], 2), before);
}

TEST(Copy, IndependentBitwiseCopies) {
    auto src = random_params(10);
    const auto copy = copy_params(src);
    EXPECT_EQ(copy, src);
    EXPECT_EQ(copy_params(copy), src);
    src.layers[0].weights(0, 0) += 1.0;
    EXPECT_FALSE(copy == src);
}

TEST(Checkpoint, JsonRoundTrip) {
    const auto p = random_params(12);
    EXPECT_EQ(params_from_json<double>(nlohmann::json::parse(params_to_json(p).dump())), p);
    auto bad = params_to_json(p);
    bad["layers"][0]["biases"].push_back(0.0);
    EXPECT_THROW(params_from_json<double>(bad), std::invalid_argument);
    bad = params_to_json(p);
    bad["format"] = "other";
    EXPECT_THROW(params_from_json<double>(bad), std::invalid_argument);
}

TEST(FloatPrecision, FloatNetworkTracksDouble) {
    const auto pd = init_mlp<double>(13);
    const auto pf = init_mlp<float>(13);
    const auto qd = forward(pd, Observation{0.5, 0.25, 0.1});
    const auto qf = forward(pf, Observation{0.5, 0.25, 0.1});
    for (std::size_t a = 0; a < kNumActions; ++a) EXPECT_NEAR(qd[a], qf[a], 1e-4);
}
