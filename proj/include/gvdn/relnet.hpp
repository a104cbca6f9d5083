#pragma once

// Relational networks: directed weighted graphs over agents, and the team
// reward they induce. Entry (i, j) is the weight agent i places on agent j's
// reward; absent edges are stored as 0.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"
#include "switch_env.hpp"

namespace gvdn {

class RelationalNetwork {
public:
    /// Row-major n x n weights. Throws if any weight is outside [0, 1] or all are zero.
    static RelationalNetwork from_matrix(std::size_t n, std::vector<double> weights) {
        if (n == 0 || n > kMaxAgents) throw std::invalid_argument("relational network needs 1..4 agents");
        if (weights.size() != n * n) throw std::invalid_argument("weight matrix dimension mismatch");
        bool any_nonzero = false;
        for (double w : weights) {
            if (!(w >= 0.0 && w <= 1.0)) throw std::invalid_argument("edge weight outside [0, 1]");
            any_nonzero = any_nonzero || w != 0.0;
        }
        if (!any_nonzero) throw std::invalid_argument("relational network has no nonzero edge");
        return RelationalNetwork(n, std::move(weights));
    }

    std::size_t size() const { return n_; }
    double weight(std::size_t from, std::size_t to) const { return w_.at(from * n_ + to); }
    std::span<const double> weights() const { return w_; }

    /// Sum of weights on edges pointing at `agent`.
    double incoming_weight(std::size_t agent) const {
        double total = 0.0;
        for (std::size_t i = 0; i < n_; ++i) total += weight(i, agent);
        return total;
    }

    RelationalNetwork scaled(double c) const {
        std::vector<double> w = w_;
        for (double& x : w) x *= c;
        return from_matrix(n_, std::move(w));
    }

    /// Network over relabelled agents: agent k of the result is agent perm[k] here.
    RelationalNetwork permuted(std::span<const std::size_t> perm) const {
        if (perm.size() != n_) throw std::invalid_argument("permutation size mismatch");
        std::vector<double> w(n_ * n_);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) w[i * n_ + j] = weight(perm[i], perm[j]);
        }
        return from_matrix(n_, std::move(w));
    }

    friend bool operator==(const RelationalNetwork&, const RelationalNetwork&) = default;

private:
    RelationalNetwork(std::size_t n, std::vector<double> w) : n_(n), w_(std::move(w)) {}

    std::size_t n_;
    std::vector<double> w_;
};

/// Self-interest network: unit self-loops only.
inline RelationalNetwork identity_network(std::size_t n) {
    std::vector<double> w(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
    return RelationalNetwork::from_matrix(n, std::move(w));
}

/// sum_i sum_{j in E_i} w_ij * r_j, accumulated in (i, j) lexicographic order over present edges.
inline double aggregate_team_reward(const RelationalNetwork& g, std::span<const double> rewards) {
    const std::size_t n = g.size();
    if (rewards.size() != n) throw std::invalid_argument("reward vector does not match network size");
    const auto w = g.weights();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double wij = w[i * n + j];
            if (wij != 0.0) total += wij * rewards[j];
        }
    }
    return total;
}

/// Plain VDN team reward: the unweighted sum in agent order.
struct UniformSum {};

/// How individual rewards are folded into the training signal.
using TeamRewardRule = std::variant<UniformSum, RelationalNetwork>;

inline double team_reward(const TeamRewardRule& rule, std::span<const double> rewards) {
    if (const auto* g = std::get_if<RelationalNetwork>(&rule)) return aggregate_team_reward(*g, rewards);
    double total = 0.0;
    for (double r : rewards) total += r;
    return total;
}

inline void check_team_size(const TeamRewardRule& rule, std::size_t n_agents) {
    if (const auto* g = std::get_if<RelationalNetwork>(&rule); g && g->size() != n_agents) {
        throw std::invalid_argument("relational network size does not match the team");
    }
}

// JSON: {"n": 2, "edges": [["red", "blue", 1.0], ...]}

inline RelationalNetwork relnet_from_json(const nlohmann::json& j, std::size_t n) {
    if (j.at("n").get<std::size_t>() != n) throw std::invalid_argument("relational network dimension mismatch");
    std::vector<double> w(n * n, 0.0);
    std::vector<bool> seen(n * n, false);
    for (const auto& e : j.at("edges")) {
        if (!e.is_array() || e.size() != 3) throw std::invalid_argument("edge must be [from, to, weight]");
        const std::size_t from = agent_index(e.at(0).get<std::string>());
        const std::size_t to = agent_index(e.at(1).get<std::string>());
        if (from >= n || to >= n) throw std::invalid_argument("edge refers to an agent outside the team");
        if (seen[from * n + to]) throw std::invalid_argument("duplicate edge");
        seen[from * n + to] = true;
        w[from * n + to] = e.at(2).get<double>();
    }
    return RelationalNetwork::from_matrix(n, std::move(w));
}

inline RelationalNetwork parse_relnet(std::string_view text, std::size_t n) {
    return relnet_from_json(nlohmann::json::parse(text), n);
}

inline nlohmann::json relnet_to_json(const RelationalNetwork& g) {
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t i = 0; i < g.size(); ++i) {
        for (std::size_t j = 0; j < g.size(); ++j) {
            if (g.weight(i, j) != 0.0) edges.push_back({agent_name(i), agent_name(j), g.weight(i, j)});
        }
    }
    return {{"n", g.size()}, {"edges", edges}};
}

inline std::string serialize_relnet(const RelationalNetwork& g) { return relnet_to_json(g).dump(); }

}  // namespace gvdn
