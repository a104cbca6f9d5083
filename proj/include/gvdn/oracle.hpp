#pragma once

// Exact finite-horizon planner for the Switch game. Backward induction over
// every joint state reachable from the reset state, maximising the undiscounted
// team reward of a TeamRewardRule under the environment's own step semantics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "metrics.hpp"
#include "relnet.hpp"
#include "switch_env.hpp"

namespace gvdn {

class StateBudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct OracleOptions {
    std::size_t max_states = 50'000'000;  // dense table entries, (max_steps + 1) * cells^n
    double tie_tolerance = 1e-9;          // used only when collecting tied optimal orderings
};

struct OracleSolution {
    explicit OracleSolution(EnvConfig cfg) : env(std::move(cfg)) {}

    EnvConfig env;
    double v_star = 0.0;
    std::vector<double> per_agent_returns;
    AgentOrder crossing_order;
    std::vector<AgentOrder> optimal_orderings;   // every corridor-entry order some optimal policy produces
    AgentOrder traversal_order;                  // order of arrival in the far room under the extracted policy
    std::vector<AgentOrder> optimal_traversals;  // every arrival order some optimal policy produces
    std::size_t states_enumerated = 0;
    std::vector<EnvState> trajectory;  // extracted policy's rollout, trajectory[0] = reset state
    std::vector<std::vector<Action>> actions;

    // Dense tables indexed by t * num_codes + code.
    std::size_t num_codes = 0;
    std::vector<double> values;
    std::vector<std::uint16_t> policy_codes;
    std::vector<std::uint8_t> reachable;

    std::uint64_t encode(const EnvState& s) const {
        std::uint64_t code = 0, scale = 1;
        for (std::size_t i = 0; i < env.n_agents; ++i) {
            const int idx = env.layout.cell_index(s.positions[i]);
            if (idx < 0) throw std::invalid_argument("state has an agent on an invalid cell");
            code += static_cast<std::uint64_t>(idx) * scale;
            scale *= env.layout.num_valid();
        }
        return code;
    }

    EnvState decode(std::uint64_t code, int t) const {
        EnvState s;
        s.t = t;
        for (std::size_t i = 0; i < env.n_agents; ++i) {
            s.positions.push_back(env.layout.cell_at(code % env.layout.num_valid()));
            code /= env.layout.num_valid();
            s.done.push_back(s.positions.back() == env.layout.goals()[i]);
        }
        return s;
    }

    bool is_reachable(const EnvState& s) const {
        return s.t >= 0 && s.t <= env.max_steps && reachable[slot(s)] != 0;
    }

    /// Optimal value-to-go of a reachable state.
    double value(const EnvState& s) const {
        if (!is_reachable(s)) throw std::out_of_range("state was not enumerated");
        return values[slot(s)];
    }

    /// Canonical optimal joint action at a reachable non-terminal state.
    std::vector<Action> policy(const EnvState& s) const {
        if (!is_reachable(s) || is_terminal(s, env)) throw std::out_of_range("no decision at this state");
        std::uint16_t code = policy_codes[slot(s)];
        std::vector<Action> joint(env.n_agents);
        for (std::size_t i = env.n_agents; i-- > 0;) {
            joint[i] = action_from_index(code % kNumActions);
            code /= kNumActions;
        }
        return joint;
    }

    std::vector<EnvState> reachable_states(int t) const {
        std::vector<EnvState> out;
        for (std::size_t c = 0; c < num_codes; ++c) {
            if (reachable[static_cast<std::size_t>(t) * num_codes + c]) out.push_back(decode(c, t));
        }
        return out;
    }

    /// Agents that are first across the corridor under some optimal policy.
    std::vector<std::size_t> optimal_first_crossers() const {
        std::set<std::size_t> first;
        for (const auto& o : optimal_traversals) {
            if (!o.empty()) first.insert(o.front());
        }
        return {first.begin(), first.end()};
    }

private:
    std::size_t slot(const EnvState& s) const { return static_cast<std::size_t>(s.t) * num_codes + encode(s); }
};

namespace detail {

/// Allocation-free joint state used inside the solver loops.
struct Packed {
    std::array<Cell, kMaxAgents> positions{};
    std::array<bool, kMaxAgents> done{};
};

inline Packed pack(const EnvState& s) {
    Packed p;
    for (std::size_t i = 0; i < s.positions.size(); ++i) {
        p.positions[i] = s.positions[i];
        p.done[i] = s.done[i];
    }
    return p;
}

struct JointMoves {
    // Per agent: distinct-outcome actions, each the smallest action index with that outcome, ascending.
    std::array<std::array<std::uint8_t, kNumActions>, kMaxAgents> options{};
    std::array<std::uint8_t, kMaxAgents> count{};
};

inline JointMoves joint_moves(const EnvConfig& cfg, const Packed& s) {
    JointMoves jm;
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        if (s.done[i]) {
            jm.options[i][0] = 0;
            jm.count[i] = 1;
            continue;
        }
        // Moves into invalid cells leave the agent in place, exactly like Stay.
        std::uint8_t stay_rep = static_cast<std::uint8_t>(Action::Stay);
        for (std::size_t a = 0; a < kNumActions; ++a) {
            if (!cfg.layout.is_valid(moved(s.positions[i], action_from_index(a)))) {
                stay_rep = static_cast<std::uint8_t>(a);
                break;
            }
        }
        std::uint8_t k = 0;
        for (std::size_t a = 0; a < kNumActions; ++a) {
            const Action act = action_from_index(a);
            const bool valid_move = act != Action::Stay && cfg.layout.is_valid(moved(s.positions[i], act));
            if (valid_move || a == stay_rep) jm.options[i][k++] = static_cast<std::uint8_t>(a);
        }
        jm.count[i] = k;
    }
    return jm;
}

/// Calls f(joint) for each distinct-outcome joint action in lexicographic order (agent 0 most significant).
template <class F>
void for_each_joint(const EnvConfig& cfg, const JointMoves& jm, F&& f) {
    const std::size_t n = cfg.n_agents;
    std::array<std::uint8_t, kMaxAgents> digit{};
    std::array<Action, kMaxAgents> joint{};
    while (true) {
        for (std::size_t i = 0; i < n; ++i) joint[i] = static_cast<Action>(jm.options[i][digit[i]]);
        f(joint);
        std::size_t i = n;
        while (i-- > 0) {
            if (++digit[i] < jm.count[i]) break;
            digit[i] = 0;
        }
        if (i == static_cast<std::size_t>(-1)) return;
    }
}

struct PackedStep {
    Packed next;
    double team = 0.0;
};

inline PackedStep apply_joint(const EnvConfig& cfg, const TeamRewardRule& rule, const Packed& s,
                              const std::array<Action, kMaxAgents>& joint) {
    PackedStep out{s};
    std::array<double, kMaxAgents> rewards{};
    resolve_moves(cfg, out.next.positions, out.next.done, joint, rewards);
    out.team = team_reward(rule, std::span<const double>(rewards.data(), cfg.n_agents));
    return out;
}

inline std::uint16_t joint_code(const std::array<Action, kMaxAgents>& joint, std::size_t n) {
    std::uint16_t code = 0;
    for (std::size_t i = 0; i < n; ++i) code = static_cast<std::uint16_t>(code * kNumActions + to_index(joint[i]));
    return code;
}

}  // namespace detail

inline OracleSolution solve(const EnvConfig& cfg, const TeamRewardRule& rule, const OracleOptions& opts = {}) {
    cfg.validate();
    check_team_size(rule, cfg.n_agents);
    OracleSolution sol(cfg);
    const std::size_t n = cfg.n_agents;
    const std::size_t cells = cfg.layout.num_valid();
    const auto horizon = static_cast<std::size_t>(cfg.max_steps);

    const double codes = std::pow(static_cast<double>(cells), static_cast<double>(n));
    if (codes * static_cast<double>(horizon + 1) > static_cast<double>(opts.max_states)) {
        throw StateBudgetExceeded("joint state table would exceed the oracle's state budget");
    }
    sol.num_codes = static_cast<std::size_t>(codes);
    const std::size_t table = sol.num_codes * (horizon + 1);
    sol.values.assign(table, 0.0);
    sol.policy_codes.assign(table, 0);
    sol.reachable.assign(table, 0);

    std::vector<int> cell_index(static_cast<std::size_t>(cfg.layout.rows() * cfg.layout.cols()), -1);
    for (std::size_t k = 0; k < cells; ++k) {
        const Cell c = cfg.layout.cell_at(k);
        cell_index[static_cast<std::size_t>(c.row * cfg.layout.cols() + c.col)] = static_cast<int>(k);
    }
    auto encode = [&](const detail::Packed& p) {
        std::uint64_t code = 0;
        for (std::size_t i = n; i-- > 0;) {
            const Cell c = p.positions[i];
            code = code * cells + static_cast<std::uint64_t>(cell_index[static_cast<std::size_t>(c.row * cfg.layout.cols() + c.col)]);
        }
        return code;
    };
    auto decode = [&](std::uint64_t code) {
        detail::Packed p;
        for (std::size_t i = 0; i < n; ++i) {
            p.positions[i] = cfg.layout.cell_at(code % cells);
            code /= cells;
            p.done[i] = p.positions[i] == cfg.layout.goals()[i];
        }
        return p;
    };
    auto all_done = [&](const detail::Packed& p) {
        return std::all_of(p.done.begin(), p.done.begin() + static_cast<std::ptrdiff_t>(n), [](bool d) { return d; });
    };

    // Forward closure from the reset state.
    std::vector<std::vector<std::uint64_t>> layer(horizon + 1);
    const EnvState s0 = reset(cfg).first;
    layer[0].push_back(encode(detail::pack(s0)));
    sol.reachable[layer[0][0]] = 1;
    for (std::size_t t = 0; t < horizon; ++t) {
        std::uint8_t* next_flags = &sol.reachable[(t + 1) * sol.num_codes];
        for (std::uint64_t code : layer[t]) {
            const detail::Packed s = decode(code);
            if (all_done(s)) continue;
            detail::for_each_joint(cfg, detail::joint_moves(cfg, s), [&](const auto& joint) {
                detail::Packed next = s;
                std::array<double, kMaxAgents> r{};
                resolve_moves(cfg, next.positions, next.done, joint, r);
                const std::uint64_t c = encode(next);
                if (!next_flags[c]) {
                    next_flags[c] = 1;
                    layer[t + 1].push_back(c);
                }
            });
        }
    }
    for (const auto& l : layer) sol.states_enumerated += l.size();

    // Backward induction; the first strict improvement keeps the lexicographically smallest maximiser.
    for (std::size_t t = horizon; t-- > 0;) {
        const double* next_values = &sol.values[(t + 1) * sol.num_codes];
        for (std::uint64_t code : layer[t]) {
            const detail::Packed s = decode(code);
            if (all_done(s)) continue;
            double best = -std::numeric_limits<double>::infinity();
            std::uint16_t best_code = 0;
            detail::for_each_joint(cfg, detail::joint_moves(cfg, s), [&](const auto& joint) {
                const auto tr = detail::apply_joint(cfg, rule, s, joint);
                const double v = tr.team + next_values[encode(tr.next)];
                if (v > best) {
                    best = v;
                    best_code = detail::joint_code(joint, n);
                }
            });
            sol.values[t * sol.num_codes + code] = best;
            sol.policy_codes[t * sol.num_codes + code] = best_code;
        }
    }
    sol.v_star = sol.values[layer[0][0]];

    // Roll out the extracted policy; the return is summed back-to-front to match the recursion exactly.
    EnvState s = s0;
    sol.trajectory.push_back(s);
    std::vector<double> team_rewards;
    sol.per_agent_returns.assign(n, 0.0);
    while (!is_terminal(s, cfg)) {
        auto joint = sol.policy(s);
        auto res = step(s, cfg, joint);
        for (std::size_t i = 0; i < n; ++i) sol.per_agent_returns[i] += res.rewards[i];
        team_rewards.push_back(team_reward(rule, res.rewards));
        sol.actions.push_back(std::move(joint));
        s = std::move(res.state);
        sol.trajectory.push_back(s);
    }
    double rollout_value = 0.0;
    for (std::size_t k = team_rewards.size(); k-- > 0;) rollout_value = team_rewards[k] + rollout_value;
    if (rollout_value != sol.v_star) throw std::logic_error("oracle policy rollout disagrees with its value");
    sol.crossing_order = crossing_order(sol.trajectory, cfg);

    sol.traversal_order = traversal_order(sol.trajectory, cfg);

    // Entry and arrival orders reachable along (tie-tolerant) optimal edges.
    const auto rooms = room_labels(cfg.layout);
    std::array<int, kMaxAgents> home{};
    for (std::size_t i = 0; i < n; ++i) home[i] = rooms[static_cast<std::size_t>(cfg.layout.cell_index(s0.positions[i]))];
    auto crossed = [&](std::size_t i, Cell c) {
        const int r = rooms[static_cast<std::size_t>(cfg.layout.cell_index(c))];
        return r >= 0 && r != home[i];
    };
    auto extend = [](AgentOrder& order, std::size_t i) {
        if (std::find(order.begin(), order.end(), i) == order.end()) order.push_back(i);
    };
    auto prefix_code = [](const AgentOrder& o) {
        std::uint64_t c = 0;
        for (std::size_t a : o) c = c * (kMaxAgents + 1) + a + 1;
        return c;
    };
    constexpr std::uint64_t kPrefixCodes = 625;  // 5^4 > any prefix code
    std::set<AgentOrder> entries, arrivals;
    std::unordered_set<std::uint64_t> visited;
    auto explore = [&](auto&& self, std::size_t t, const detail::Packed& st, const AgentOrder& entered,
                       const AgentOrder& arrived) -> void {
        if (t == horizon || all_done(st)) {
            entries.insert(entered);
            arrivals.insert(arrived);
            return;
        }
        const std::uint64_t code = encode(st);
        const std::uint64_t key =
            ((t * sol.num_codes + code) * kPrefixCodes + prefix_code(entered)) * kPrefixCodes + prefix_code(arrived);
        if (!visited.insert(key).second) return;
        const double target = sol.values[t * sol.num_codes + code];
        const double* next_values = &sol.values[(t + 1) * sol.num_codes];
        detail::for_each_joint(cfg, detail::joint_moves(cfg, st), [&](const auto& joint) {
            const auto tr = detail::apply_joint(cfg, rule, st, joint);
            if (tr.team + next_values[encode(tr.next)] < target - opts.tie_tolerance) return;
            AgentOrder next_entered = entered, next_arrived = arrived;
            for (std::size_t i = 0; i < n; ++i) {
                if (cfg.layout.is_corridor(tr.next.positions[i])) extend(next_entered, i);
                if (crossed(i, tr.next.positions[i])) extend(next_arrived, i);
            }
            self(self, t + 1, tr.next, next_entered, next_arrived);
        });
    };
    AgentOrder start_entered;
    for (std::size_t i = 0; i < n; ++i) {
        if (cfg.layout.is_corridor(s0.positions[i])) start_entered.push_back(i);
    }
    explore(explore, 0, detail::pack(s0), start_entered, AgentOrder{});
    sol.optimal_orderings.assign(entries.begin(), entries.end());
    sol.optimal_traversals.assign(arrivals.begin(), arrivals.end());
    return sol;
}

inline AgentOrder crossing_order(const OracleSolution& sol) { return sol.crossing_order; }

inline nlohmann::json oracle_report(const OracleSolution& sol) {
    auto names = [](const AgentOrder& o) {
        std::vector<std::string> v;
        for (std::size_t a : o) v.push_back(agent_name(a));
        return v;
    };
    nlohmann::json returns = nlohmann::json::object();
    for (std::size_t i = 0; i < sol.per_agent_returns.size(); ++i) returns[agent_name(i)] = sol.per_agent_returns[i];
    nlohmann::json tied = nlohmann::json::array();
    for (const auto& o : sol.optimal_orderings) tied.push_back(names(o));
    nlohmann::json arrived = nlohmann::json::array();
    for (const auto& o : sol.optimal_traversals) arrived.push_back(names(o));
    return {{"v_star", sol.v_star},
            {"per_agent_returns", returns},
            {"crossing_order", names(sol.crossing_order)},
            {"optimal_orderings", tied},
            {"traversal_order", names(sol.traversal_order)},
            {"optimal_traversals", arrived},
            {"states_enumerated", sol.states_enumerated}};
}

}  // namespace gvdn
