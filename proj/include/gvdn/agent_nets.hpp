#pragma once

// Per-agent prediction/target Q-networks and the decentralised greedy policy
// they induce. Q_tot is the plain sum of the agents' Q-values, so its max over
// joint actions splits into independent per-agent maxima.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "neural.hpp"
#include "switch_env.hpp"

namespace gvdn {

/// splitmix64 finaliser; used to derive independent seeds from one run seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

template <typename Scalar = double>
struct AgentNets {
    std::vector<MlpParams<Scalar>> prediction;
    std::vector<MlpParams<Scalar>> target;
    std::vector<AdamState<Scalar>> optim;

    std::size_t size() const { return prediction.size(); }
    friend bool operator==(const AgentNets&, const AgentNets&) = default;
};

template <typename Scalar = double>
AgentNets<Scalar> make_agent_nets(std::size_t n_agents, std::uint64_t seed,
                                  const std::vector<int>& layer_sizes = kDefaultLayerSizes) {
    AgentNets<Scalar> nets;
    for (std::size_t i = 0; i < n_agents; ++i) {
        nets.prediction.push_back(init_mlp<Scalar>(derive_seed(seed, i), layer_sizes));
        nets.target.push_back(nets.prediction.back());
        nets.optim.push_back(AdamState<Scalar>::for_params(nets.prediction.back()));
    }
    return nets;
}

/// target_i := prediction_i for every agent.
template <typename Scalar>
void sync_targets(AgentNets<Scalar>& nets) {
    for (std::size_t i = 0; i < nets.size(); ++i) nets.target[i] = copy_params(nets.prediction[i]);
}

/// Index of the largest Q-value; ties go to the lowest action index.
inline std::size_t argmax_action(const QValues& q) {
    std::size_t best = 0;
    for (std::size_t a = 1; a < q.size(); ++a) {
        if (q[a] > q[best]) best = a;
    }
    return best;
}

inline double max_q(const QValues& q) { return q[argmax_action(q)]; }

template <typename Scalar>
std::vector<Action> greedy_joint_action(const AgentNets<Scalar>& nets, std::span<const Observation> obs,
                                        const std::vector<bool>& done) {
    if (obs.size() != nets.size() || done.size() != nets.size()) throw std::invalid_argument("agent count mismatch");
    std::vector<Action> joint(obs.size(), Action::Stay);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        if (!done[i]) joint[i] = action_from_index(argmax_action(forward(nets.prediction[i], obs[i])));
    }
    return joint;
}

/// max over joint actions of sum_i Q_target_i = sum over not-done agents of max_a Q_target_i.
template <typename Scalar>
double decoupled_max_qtot(const AgentNets<Scalar>& nets, std::span<const Observation> next_obs,
                          const std::vector<bool>& done_after) {
    if (next_obs.size() != nets.size() || done_after.size() != nets.size()) {
        throw std::invalid_argument("agent count mismatch");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < next_obs.size(); ++i) {
        if (!done_after[i]) total += max_q(forward(nets.target[i], next_obs[i]));
    }
    return total;
}

}  // namespace gvdn
