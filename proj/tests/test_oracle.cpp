#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "experiment.hpp"
#include "oracle.hpp"

using namespace gvdn;

namespace {

const OracleSolution& solved(const std::string& preset_name) {
    static std::map<std::string, OracleSolution> cache;
    auto it = cache.find(preset_name);
    if (it == cache.end()) {
        const auto p = preset(preset_name);
        it = cache.emplace(preset_name, solve(p.env, p.network)).first;
    }
    return it->second;
}

std::vector<std::size_t> names_to_order(std::initializer_list<const char*> names) {
    std::vector<std::size_t> out;
    for (const char* n : names) out.push_back(agent_index(n));
    return out;
}

std::vector<std::vector<Action>> all_joint_actions(std::size_t n) {
    std::vector<std::vector<Action>> out;
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= kNumActions;
    for (std::size_t c = 0; c < total; ++c) {
        std::vector<Action> joint(n);
        std::size_t code = c;
        for (std::size_t i = n; i-- > 0; code /= kNumActions) joint[i] = action_from_index(code % kNumActions);
        out.push_back(std::move(joint));
    }
    return out;
}

}  // namespace

TEST(Solve, SingleAgentShortestPath) {
    const EnvConfig solo{.layout = canonical_layout().first_agents(1), .n_agents = 1};
    const auto sol = solve(solo, identity_network(1));
    EXPECT_DOUBLE_EQ(sol.v_star, 4.4);
    EXPECT_DOUBLE_EQ(sol.v_star, 5.0 - 0.1 * (solo.layout.shortest_path_length(0) - 1));
    EXPECT_EQ(sol.actions.size(), 7u);
}

TEST(Solve, TwoAgentIdentityUnderSequentialMoves) {
    // The lower-index agent crossing first lets the other follow one cell behind.
    const auto& sol = solved("vdn2");
    EXPECT_NEAR(sol.v_star, 8.3, 1e-12);
    EXPECT_NEAR(sol.per_agent_returns[0], 4.4, 1e-12);
    EXPECT_NEAR(sol.per_agent_returns[1], 3.9, 1e-12);
    EXPECT_EQ(sol.crossing_order, names_to_order({"red", "blue"}));
}

TEST(Solve, PresetGbBlueFirst) {
    const auto& sol = solved("gb");
    EXPECT_EQ(sol.crossing_order, names_to_order({"blue", "red"}));
    EXPECT_NEAR(sol.per_agent_returns[0], 3.8, 1e-12);
    EXPECT_NEAR(sol.per_agent_returns[1], 4.4, 1e-12);
}

TEST(Solve, PresetCrossingOrders) {
    EXPECT_EQ(crossing_order(solved("gc")), names_to_order({"red", "blue"}));
    EXPECT_EQ(crossing_order(solved("ge")), names_to_order({"red", "green", "blue"}));
    EXPECT_EQ(crossing_order(solved("gg")), names_to_order({"green", "blue", "red"}));
    EXPECT_EQ(solved("gf").crossing_order.front(), agent_index("blue"));
}

TEST(Solve, PresetGeReturns) {
    const auto& r = solved("ge").per_agent_returns;
    EXPECT_NEAR(r[0], 4.4, 1e-12);
    EXPECT_NEAR(r[1], 3.7, 1e-12);
    EXPECT_NEAR(r[2], 4.3, 1e-12);
}

TEST(Solve, PresetGgCostsCollectiveReward) {
    const auto total = [](const OracleSolution& s) {
        return std::accumulate(s.per_agent_returns.begin(), s.per_agent_returns.end(), 0.0);
    };
    EXPECT_LT(total(solved("gg")), total(solved("ge")));
    EXPECT_GE(solved("gg").per_agent_returns[0], 3.0);
    EXPECT_LE(solved("gg").per_agent_returns[0], 3.3);
}

TEST(Solve, ArrivalOrderUniqueForPresets) {
    const std::map<std::string, std::vector<std::size_t>> expected{
        {"gb", names_to_order({"blue", "red"})},
        {"gc", names_to_order({"red", "blue"})},
        {"ge", names_to_order({"red", "green", "blue"})},
        {"gf", names_to_order({"blue", "green", "red"})},
        {"gg", names_to_order({"green", "blue", "red"})}};
    for (const auto& [name, order] : expected) {
        const auto& sol = solved(name);
        ASSERT_EQ(sol.optimal_traversals.size(), 1u) << name;
        EXPECT_EQ(sol.optimal_traversals.front(), order) << name;
        EXPECT_EQ(sol.traversal_order, order) << name;
        EXPECT_EQ(sol.crossing_order, order) << name;
    }
}

TEST(Solve, BellmanConsistencyAgainstStep) {
    for (const char* name : {"vdn2", "gb", "gc"}) {
        const auto& sol = solved(name);
        const auto p = preset(name);
        const auto joints = all_joint_actions(p.env.n_agents);
        std::size_t checked = 0;
        for (int t = 0; t < p.env.max_steps; ++t) {
            for (const auto& s : sol.reachable_states(t)) {
                if (is_terminal(s, p.env)) continue;
                double best = -INFINITY;
                for (const auto& joint : joints) {
                    const auto res = step(s, p.env, joint);
                    best = std::max(best, team_reward(p.network, res.rewards) + sol.value(res.state));
                }
                ASSERT_EQ(best, sol.value(s)) << name << " t=" << t;
                // The stored policy attains the maximum.
                const auto res = step(s, p.env, sol.policy(s));
                ASSERT_EQ(team_reward(p.network, res.rewards) + sol.value(res.state), best);
                ++checked;
            }
        }
        EXPECT_GT(checked, 1000u);
    }
}

TEST(Solve, PolicyIsLexicographicallySmallestMaximiser) {
    const auto& sol = solved("vdn2");
    const auto p = preset("vdn2");
    const auto joints = all_joint_actions(2);
    for (int t : {0, 3, 10}) {
        for (const auto& s : sol.reachable_states(t)) {
            if (is_terminal(s, p.env)) continue;
            // First joint action (agent 0 most significant) reaching the value, skipping
            // actions equivalent to an earlier one at this state.
            std::vector<Action> first;
            for (const auto& joint : joints) {
                const auto res = step(s, p.env, joint);
                if (team_reward(p.network, res.rewards) + sol.value(res.state) == sol.value(s)) {
                    first = joint;
                    break;
                }
            }
            const auto res_first = step(s, p.env, first);
            const auto res_policy = step(s, p.env, sol.policy(s));
            ASSERT_EQ(res_first.state, res_policy.state);
        }
    }
}

TEST(Solve, RolloutReproducesValue) {
    for (const char* name : {"vdn2", "gb", "gc", "vdn3", "ge", "gf", "gg"}) {
        const auto& sol = solved(name);
        const auto p = preset(name);
        double total = 0.0;
        std::vector<double> team;
        EnvState s = reset(p.env).first;
        for (const auto& joint : sol.actions) {
            const auto res = step(s, p.env, joint);
            team.push_back(team_reward(p.network, res.rewards));
            s = res.state;
        }
        for (std::size_t k = team.size(); k-- > 0;) total = team[k] + total;
        EXPECT_EQ(total, sol.v_star) << name;
        EXPECT_TRUE(is_terminal(s, p.env));
    }
}

TEST(Solve, DominatesRandomPolicies) {
    for (const char* name : {"vdn2", "vdn3"}) {
        const auto& sol = solved(name);
        const auto p = preset(name);
        std::mt19937_64 rng(17);
        std::uniform_int_distribution<std::size_t> pick(0, kNumActions - 1);
        for (int k = 0; k < 1000; ++k) {
            // A fixed deterministic policy: actions drawn once per (t, state) and reused.
            std::map<std::pair<int, std::uint64_t>, std::vector<Action>> policy;
            EnvState s = reset(p.env).first;
            double ret = 0.0;
            while (!is_terminal(s, p.env)) {
                auto& joint = policy[{s.t, sol.encode(s)}];
                if (joint.empty()) {
                    for (std::size_t i = 0; i < p.env.n_agents; ++i) joint.push_back(action_from_index(pick(rng)));
                }
                const auto res = step(s, p.env, joint);
                ret += team_reward(p.network, res.rewards);
                s = res.state;
            }
            ASSERT_LE(ret, sol.v_star + 1e-9) << name;
        }
    }
}

TEST(Solve, TwoAgentIdentityValueInvariantUnderRelabelling) {
    const auto base = make_env(2);
    const std::vector<std::size_t> swap{1, 0};
    EnvConfig cfg = base;
    cfg.layout = base.layout.permuted(swap);
    EXPECT_NEAR(solve(cfg, identity_network(2).permuted(swap)).v_star, solve(base, identity_network(2)).v_star, 1e-9);
}

TEST(Solve, IndexOrderBreaksRelabellingSymmetry) {
    // Moves resolve in index order, so relabelling can change who may follow whom.
    const auto base = make_env(3);
    const std::vector<std::size_t> perm{0, 2, 1};
    EnvConfig cfg = base;
    cfg.layout = base.layout.permuted(perm);
    EXPECT_NEAR(solve(base, identity_network(3)).v_star, 12.4, 1e-9);
    EXPECT_NEAR(solve(cfg, identity_network(3)).v_star, 12.5, 1e-9);
}

TEST(Solve, EncodingIsInjective) {
    const auto& sol = solved("vdn3");
    std::set<std::uint64_t> codes;
    std::size_t count = 0;
    for (int t : {0, 5, 20}) {
        for (const auto& s : sol.reachable_states(t)) {
            codes.insert(sol.encode(s));
            EXPECT_EQ(sol.decode(sol.encode(s), t), s);
            ++count;
        }
        EXPECT_EQ(codes.size(), count);
        codes.clear();
        count = 0;
    }
}

TEST(Solve, StateBudget) {
    OracleOptions tight;
    tight.max_states = 1000;
    EXPECT_THROW(solve(make_env(2), identity_network(2), tight), StateBudgetExceeded);
    EXPECT_THROW(solve(make_env(2), identity_network(3)), std::invalid_argument);
}

TEST(Report, Fields) {
    const auto j = oracle_report(solved("ge"));
    EXPECT_TRUE(j.contains("v_star"));
    EXPECT_TRUE(j.contains("states_enumerated"));
    EXPECT_EQ(j["crossing_order"], (nlohmann::json{"red", "green", "blue"}));
    EXPECT_DOUBLE_EQ(j["per_agent_returns"]["red"].get<double>(), 4.4);
}

TEST(Solve, FourAgentPresetYellowFirst) {
    const auto& sol = solved("gi");
    EXPECT_EQ(sol.crossing_order.front(), agent_index("yellow"));
    EXPECT_EQ(sol.optimal_first_crossers(), std::vector<std::size_t>{agent_index("yellow")});
    EXPECT_GE(sol.per_agent_returns[3], 4.2);
}
