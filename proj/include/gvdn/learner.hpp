#pragma once

// Centralised training of decentralised Q-networks. The TD target uses the
// team reward produced by a TeamRewardRule: the plain sum (VDN) or a
// relational network's weighted sum (G-VDN). Everything else is shared.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "agent_nets.hpp"
#include "metrics.hpp"
#include "neural.hpp"
#include "relnet.hpp"
#include "replay.hpp"
#include "switch_env.hpp"

namespace gvdn {

using Rng = std::mt19937_64;

struct Hyperparams {
    double gamma = 0.99;
    double lr = 1e-3;
    std::size_t batch_size = 32;
    std::size_t updates_per_episode = 10;
    std::size_t target_sync_every = 200;  // episodes
    std::size_t memory_capacity = 50'000;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.5;
    std::size_t total_episodes = 10'000;
    std::size_t eval_every = 50;
    std::size_t final_window = 5;  // eval points averaged into the final returns
    std::vector<int> layer_sizes = kDefaultLayerSizes;

    /// Defaults with the episode budget for a team of `n_agents`.
    static Hyperparams for_agents(std::size_t n_agents) {
        Hyperparams h;
        h.total_episodes = n_agents <= 2 ? 10'000 : n_agents == 3 ? 20'000 : 30'000;
        return h;
    }

    void validate() const {
        if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
        if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
        if (!(eps_start >= eps_end && eps_end >= 0.0 && eps_start <= 1.0)) {
            throw std::invalid_argument("need 1 >= eps_start >= eps_end >= 0");
        }
        if (!(eps_decay_fraction >= 0.0 && eps_decay_fraction <= 1.0)) {
            throw std::invalid_argument("eps_decay_fraction must lie in [0, 1]");
        }
        if (batch_size == 0 || updates_per_episode == 0 || target_sync_every == 0 || memory_capacity == 0 ||
            total_episodes == 0 || eval_every == 0 || final_window == 0) {
            throw std::invalid_argument("hyperparameter counts must be positive");
        }
        if (layer_sizes.size() < 2 || layer_sizes.front() != static_cast<int>(kObsDim) ||
            layer_sizes.back() != static_cast<int>(kNumActions)) {
            throw std::invalid_argument("layer sizes must start at 3 inputs and end at 5 actions");
        }
    }

    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Linear decay from eps_start to eps_end over the first eps_decay_fraction of training.
inline double epsilon_schedule(std::size_t episode, const Hyperparams& h) {
    const double horizon = h.eps_decay_fraction * static_cast<double>(h.total_episodes);
    if (horizon <= 0.0 || static_cast<double>(episode) >= horizon) return h.eps_end;
    return h.eps_start + (h.eps_end - h.eps_start) * (static_cast<double>(episode) / horizon);
}

/// r_team, plus gamma * max Q_tot(s') from the target networks unless the episode ended.
template <typename Scalar>
double td_target(const Transition& item, const TeamRewardRule& rule, const AgentNets<Scalar>& nets,
                 const Hyperparams& h) {
    const double r_team = team_reward(rule, item.rewards);
    if (item.team_done_after) return r_team;
    return r_team + h.gamma * decoupled_max_qtot(nets, item.next_obs, item.done_after);
}

/// Q_tot(s, u) from the prediction networks, skipping agents done before acting.
template <typename Scalar>
double predicted_qtot(const AgentNets<Scalar>& nets, const Transition& item) {
    double total = 0.0;
    for (std::size_t i = 0; i < nets.size(); ++i) {
        if (!item.done_before[i]) total += forward(nets.prediction[i], item.obs[i])[to_index(item.actions[i])];
    }
    return total;
}

/// One minibatch update of every agent's prediction network; returns the mean squared TD error.
template <typename Scalar>
double train_step(AgentNets<Scalar>& nets, const ReplayMemory& mem, const TeamRewardRule& rule, const Hyperparams& h,
                  Rng& rng) {
    const auto batch = mem.sample(h.batch_size, rng);
    const std::size_t bsize = batch.size(), n = nets.size();
    std::vector<double> target(bsize), future(bsize, 0.0), qtot(bsize, 0.0);
    for (std::size_t b = 0; b < bsize; ++b) target[b] = team_reward(rule, batch[b].get().rewards);

    std::vector<Observation> cols_obs;
    std::vector<std::size_t> cols;
    for (std::size_t i = 0; i < n; ++i) {
        cols.clear();
        cols_obs.clear();
        for (std::size_t b = 0; b < bsize; ++b) {
            const Transition& t = batch[b];
            if (!t.team_done_after && !t.done_after[i]) {
                cols.push_back(b);
                cols_obs.push_back(t.next_obs[i]);
            }
        }
        if (cols.empty()) continue;
        const Matrix<Scalar> q = forward_batch(nets.target[i], observation_matrix<Scalar>(cols_obs));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            future[cols[k]] += static_cast<double>(q.col(static_cast<Eigen::Index>(k)).maxCoeff());
        }
    }
    for (std::size_t b = 0; b < bsize; ++b) {
        if (!batch[b].get().team_done_after) target[b] += h.gamma * future[b];
    }

    std::vector<ForwardCache<Scalar>> caches(n);
    std::vector<std::vector<std::size_t>> active(n);
    for (std::size_t i = 0; i < n; ++i) {
        cols_obs.clear();
        for (std::size_t b = 0; b < bsize; ++b) {
            const Transition& t = batch[b];
            if (!t.done_before[i]) {
                active[i].push_back(b);
                cols_obs.push_back(t.obs[i]);
            }
        }
        if (active[i].empty()) continue;
        const Matrix<Scalar> q = forward_batch(nets.prediction[i], observation_matrix<Scalar>(cols_obs), &caches[i]);
        for (std::size_t k = 0; k < active[i].size(); ++k) {
            const std::size_t b = active[i][k];
            qtot[b] += static_cast<double>(
                q(static_cast<Eigen::Index>(to_index(batch[b].get().actions[i])), static_cast<Eigen::Index>(k)));
        }
    }

    std::vector<double> err(bsize);
    double loss = 0.0;
    for (std::size_t b = 0; b < bsize; ++b) {
        err[b] = target[b] - qtot[b];
        loss += err[b] * err[b];
    }
    loss /= static_cast<double>(bsize);

    // d(mean e^2)/dQ_i(s, a_i) = -2 e / b, since dQ_tot/dQ_i = 1.
    for (std::size_t i = 0; i < n; ++i) {
        GradientSet<Scalar> grads;
        if (active[i].empty()) {
            grads = GradientSet<Scalar>::zeros_like(nets.prediction[i]);
        } else {
            Matrix<Scalar> upstream = Matrix<Scalar>::Zero(static_cast<Eigen::Index>(kNumActions),
                                                           static_cast<Eigen::Index>(active[i].size()));
            for (std::size_t k = 0; k < active[i].size(); ++k) {
                const std::size_t b = active[i][k];
                upstream(static_cast<Eigen::Index>(to_index(batch[b].get().actions[i])), static_cast<Eigen::Index>(k)) =
                    static_cast<Scalar>(-2.0 * err[b] / static_cast<double>(bsize));
            }
            grads = backward_batch(nets.prediction[i], caches[i], upstream);
        }
        adam_step(nets.prediction[i], grads, nets.optim[i], h.lr);
    }
    return loss;
}

struct EpisodeStats {
    std::vector<double> returns;
    std::size_t length = 0;
};

/// Epsilon-greedy rollout, exploring independently per agent per step; every
/// timestep goes into `mem`.
template <typename Scalar>
EpisodeStats generate_episode(const EnvConfig& cfg, const AgentNets<Scalar>& nets, double eps, ReplayMemory& mem,
                              Rng& rng) {
    if (!(eps >= 0.0 && eps <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    if (nets.size() != cfg.n_agents) throw std::invalid_argument("network count does not match the team");
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_action(0, kNumActions - 1);

    auto [state, obs] = reset(cfg);
    EpisodeStats stats{std::vector<double>(cfg.n_agents, 0.0), 0};
    std::vector<Action> joint(cfg.n_agents);
    while (!is_terminal(state, cfg)) {
        for (std::size_t i = 0; i < cfg.n_agents; ++i) {
            if (state.done[i]) {
                joint[i] = Action::Stay;
            } else if (coin(rng) < eps) {
                joint[i] = action_from_index(any_action(rng));
            } else {
                joint[i] = action_from_index(argmax_action(forward(nets.prediction[i], obs[i])));
            }
        }
        auto res = step(state, cfg, joint);
        auto next_obs = observe_all(res.state, cfg);
        for (std::size_t i = 0; i < cfg.n_agents; ++i) stats.returns[i] += res.rewards[i];
        ++stats.length;
        mem.push(Transition{.obs = obs,
                            .actions = joint,
                            .rewards = res.rewards,
                            .next_obs = next_obs,
                            .done_before = state.done,
                            .done_after = res.done,
                            .team_done_after = res.team_done});
        state = std::move(res.state);
        obs = std::move(next_obs);
    }
    return stats;
}

using EvalCallback = std::function<void(const EvalPoint&)>;

/// Full training run: per episode, one epsilon-greedy episode then m minibatch
/// updates; targets sync every target_sync_every episodes; a greedy evaluation
/// every eval_every episodes. Deterministic in `seed`.
template <typename Scalar = double>
RunResult run_training(const EnvConfig& cfg, const TeamRewardRule& rule, const Hyperparams& h,
                              std::uint64_t seed, const EvalCallback& on_eval = {}) {
    cfg.validate();
    h.validate();
    check_team_size(rule, cfg.n_agents);

    AgentNets<Scalar> nets = make_agent_nets<Scalar>(cfg.n_agents, seed, h.layer_sizes);
    ReplayMemory mem(h.memory_capacity);
    Rng rng(derive_seed(seed, 1000));

    RunResult result;
    result.seed = seed;
    result.train_curve.reserve(h.total_episodes);
    result.updates_per_episode.reserve(h.total_episodes);
    result.losses.reserve(h.total_episodes * h.updates_per_episode);

    for (std::size_t ep = 0; ep < h.total_episodes; ++ep) {
        const auto stats = generate_episode(cfg, nets, epsilon_schedule(ep, h), mem, rng);
        result.train_curve.push_back(stats.returns);
        std::size_t updates = 0;
        if (mem.size() >= h.batch_size) {
            for (; updates < h.updates_per_episode; ++updates) result.losses.push_back(train_step(nets, mem, rule, h, rng));
        }
        result.updates_per_episode.push_back(updates);
        if ((ep + 1) % h.target_sync_every == 0) sync_targets(nets);
        if ((ep + 1) % h.eval_every == 0) {
            const Rollout r = rollout_greedy(nets, cfg);
            result.eval_curve.push_back({ep + 1, r.returns, r.crossing_order});
            if (on_eval) on_eval(result.eval_curve.back());
        }
    }
    result.final_returns = final_window_mean(result.eval_curve, h.final_window);
    if (!result.eval_curve.empty()) result.crossing_order_final = result.eval_curve.back().crossing_order;
    for (const auto& p : nets.prediction) result.final_params.push_back(cast_params<double>(p));
    return result;
}

}  // namespace gvdn
