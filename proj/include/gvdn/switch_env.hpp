#pragma once

// Deterministic multi-agent Switch gridworld: two rooms joined by a
// single-file corridor, one goal per agent on the far side.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <queue>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

namespace gvdn {

inline constexpr std::size_t kMaxAgents = 4;
inline constexpr std::size_t kNumActions = 5;
inline constexpr std::size_t kObsDim = 3;

inline constexpr std::array<std::string_view, kMaxAgents> kAgentNames{"red", "blue", "green", "yellow"};

inline std::size_t agent_index(std::string_view name) {
    for (std::size_t i = 0; i < kAgentNames.size(); ++i) {
        if (kAgentNames[i] == name) return i;
    }
    throw std::invalid_argument("unknown agent name: " + std::string(name));
}

inline std::string agent_name(std::size_t index) {
    if (index >= kAgentNames.size()) throw std::out_of_range("agent index out of range");
    return std::string(kAgentNames[index]);
}

struct Cell {
    int row = 0;
    int col = 0;
    friend constexpr auto operator<=>(const Cell&, const Cell&) = default;
};

enum class Action : std::uint8_t { Left = 0, Right = 1, Up = 2, Down = 3, Stay = 4 };

constexpr Action action_from_index(std::size_t a) {
    if (a >= kNumActions) throw std::out_of_range("action index out of range");
    return static_cast<Action>(a);
}

constexpr std::size_t to_index(Action a) { return static_cast<std::size_t>(a); }

constexpr Cell moved(Cell c, Action a) {
    switch (a) {
        case Action::Left: return {c.row, c.col - 1};
        case Action::Right: return {c.row, c.col + 1};
        case Action::Up: return {c.row - 1, c.col};
        case Action::Down: return {c.row + 1, c.col};
        case Action::Stay: return c;
    }
    return c;
}

/// Static geometry of the grid. Construction validates the layout: starts and
/// goals are distinct valid cells, and each agent's goal is only reachable from
/// its start through the corridor.
class GridLayout {
public:
    GridLayout(int rows, int cols, std::vector<Cell> valid_cells, std::vector<Cell> corridor_cells,
               std::vector<Cell> starts, std::vector<Cell> goals)
        : rows_(rows), cols_(cols), valid_(std::move(valid_cells)), corridor_(std::move(corridor_cells)),
          starts_(std::move(starts)), goals_(std::move(goals)) {
        if (rows_ < 1 || cols_ < 1) throw std::invalid_argument("grid must have positive dimensions");
        index_.assign(static_cast<std::size_t>(rows_ * cols_), -1);
        corridor_mask_.assign(index_.size(), 0);
        std::sort(valid_.begin(), valid_.end());
        valid_.erase(std::unique(valid_.begin(), valid_.end()), valid_.end());
        for (std::size_t k = 0; k < valid_.size(); ++k) {
            if (!in_bounds(valid_[k])) throw std::invalid_argument("valid cell outside the grid");
            index_[flat(valid_[k])] = static_cast<int>(k);
        }
        for (const Cell& c : corridor_) {
            if (!is_valid(c)) throw std::invalid_argument("corridor cell is not a valid cell");
            corridor_mask_[flat(c)] = 1;
        }
        if (starts_.size() != goals_.size()) throw std::invalid_argument("starts and goals differ in length");
        if (starts_.empty() || starts_.size() > kMaxAgents) throw std::invalid_argument("layout needs 1..4 agents");
        check_distinct_valid(starts_, "start");
        check_distinct_valid(goals_, "goal");
        for (std::size_t i = 0; i < starts_.size(); ++i) {
            if (!reachable(starts_[i], goals_[i], true)) {
                throw std::invalid_argument("goal of " + agent_name(i) + " is unreachable");
            }
            if (reachable(starts_[i], goals_[i], false)) {
                throw std::invalid_argument("goal of " + agent_name(i) + " is reachable without the corridor");
            }
        }
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    std::size_t num_agents() const { return starts_.size(); }
    std::size_t num_valid() const { return valid_.size(); }

    bool in_bounds(Cell c) const { return c.row >= 0 && c.row < rows_ && c.col >= 0 && c.col < cols_; }
    bool is_valid(Cell c) const { return in_bounds(c) && index_[flat(c)] >= 0; }
    bool is_corridor(Cell c) const { return in_bounds(c) && corridor_mask_[flat(c)] != 0; }

    /// Dense index of a valid cell in [0, num_valid()), or -1.
    int cell_index(Cell c) const { return in_bounds(c) ? index_[flat(c)] : -1; }
    Cell cell_at(std::size_t index) const { return valid_.at(index); }

    std::span<const Cell> valid_cells() const { return valid_; }
    std::span<const Cell> corridor_cells() const { return corridor_; }
    std::span<const Cell> starts() const { return starts_; }
    std::span<const Cell> goals() const { return goals_; }

    /// Same geometry restricted to the first `n` agents.
    GridLayout first_agents(std::size_t n) const {
        if (n == 0 || n > starts_.size()) throw std::invalid_argument("agent subset out of range");
        return GridLayout(rows_, cols_, valid_, corridor_, {starts_.begin(), starts_.begin() + n},
                          {goals_.begin(), goals_.begin() + n});
    }

    /// Returns a copy with the agents reordered: agent k of the result is agent perm[k] of this layout.
    GridLayout permuted(std::span<const std::size_t> perm) const {
        if (perm.size() != starts_.size()) throw std::invalid_argument("permutation size mismatch");
        std::vector<Cell> s, g;
        for (std::size_t p : perm) {
            s.push_back(starts_.at(p));
            g.push_back(goals_.at(p));
        }
        return GridLayout(rows_, cols_, valid_, corridor_, std::move(s), std::move(g));
    }

    /// Length of the shortest start-to-goal path ignoring other agents.
    int shortest_path_length(std::size_t agent) const {
        return bfs_distance(starts_.at(agent), goals_.at(agent), true);
    }

    friend bool operator==(const GridLayout& a, const GridLayout& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.valid_ == b.valid_ && a.corridor_ == b.corridor_ &&
               a.starts_ == b.starts_ && a.goals_ == b.goals_;
    }

private:
    std::size_t flat(Cell c) const { return static_cast<std::size_t>(c.row * cols_ + c.col); }

    void check_distinct_valid(const std::vector<Cell>& cells, const char* what) const {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (!is_valid(cells[i])) throw std::invalid_argument(std::string(what) + " position is not a valid cell");
            for (std::size_t j = 0; j < i; ++j) {
                if (cells[i] == cells[j]) throw std::invalid_argument(std::string(what) + " positions must be distinct");
            }
        }
    }

    bool reachable(Cell from, Cell to, bool through_corridor) const {
        return bfs_distance(from, to, through_corridor) >= 0;
    }

    int bfs_distance(Cell from, Cell to, bool through_corridor) const {
        std::vector<int> dist(index_.size(), -1);
        std::queue<Cell> frontier;
        dist[flat(from)] = 0;
        frontier.push(from);
        while (!frontier.empty()) {
            Cell c = frontier.front();
            frontier.pop();
            if (c == to) return dist[flat(c)];
            for (Action a : {Action::Left, Action::Right, Action::Up, Action::Down}) {
                Cell next = moved(c, a);
                if (!is_valid(next) || dist[flat(next)] >= 0) continue;
                if (!through_corridor && is_corridor(next)) continue;
                dist[flat(next)] = dist[flat(c)] + 1;
                frontier.push(next);
            }
        }
        return -1;
    }

    int rows_;
    int cols_;
    std::vector<Cell> valid_;
    std::vector<Cell> corridor_;
    std::vector<Cell> starts_;
    std::vector<Cell> goals_;
    std::vector<int> index_;
    std::vector<std::uint8_t> corridor_mask_;
};

struct EnvConfig {
    GridLayout layout;
    std::size_t n_agents;
    int max_steps = 50;
    double goal_reward = 5.0;
    double step_penalty = -0.1;

    void validate() const {
        if (n_agents < 1 || n_agents > layout.num_agents()) {
            throw std::invalid_argument("n_agents exceeds the layout's defined start positions");
        }
        if (max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
    }
};

/// The canonical 3x7 Switch layout: rooms in columns {0,1} and {5,6}, corridor (1,2)-(1,4).
inline GridLayout canonical_layout() {
    std::vector<Cell> valid;
    for (int r = 0; r < 3; ++r) {
        for (int c : {0, 1, 5, 6}) valid.push_back({r, c});
    }
    std::vector<Cell> corridor{{1, 2}, {1, 3}, {1, 4}};
    valid.insert(valid.end(), corridor.begin(), corridor.end());
    return GridLayout(3, 7, std::move(valid), std::move(corridor), {{0, 1}, {0, 5}, {2, 1}, {2, 5}},
                      {{0, 6}, {0, 0}, {2, 6}, {2, 0}});
}

inline EnvConfig make_env(std::size_t n_agents) {
    if (n_agents < 2 || n_agents > 4) throw std::invalid_argument("Switch supports 2, 3 or 4 agents");
    return EnvConfig{.layout = canonical_layout().first_agents(n_agents), .n_agents = n_agents};
}

struct EnvState {
    std::vector<Cell> positions;
    std::vector<bool> done;
    int t = 0;
    friend bool operator==(const EnvState&, const EnvState&) = default;
};

struct Observation {
    double row_norm = 0.0;
    double col_norm = 0.0;
    double time_norm = 0.0;
    friend bool operator==(const Observation&, const Observation&) = default;
};

struct StepResult {
    EnvState state;
    std::vector<double> rewards;
    std::vector<bool> done;
    bool team_done = false;
};

inline Observation observe(const EnvState& state, const EnvConfig& cfg, std::size_t agent) {
    if (agent >= cfg.n_agents || agent >= state.positions.size()) throw std::out_of_range("agent id out of range");
    const Cell c = state.positions[agent];
    const int rows = cfg.layout.rows(), cols = cfg.layout.cols();
    return {rows > 1 ? static_cast<double>(c.row) / (rows - 1) : 0.0,
            cols > 1 ? static_cast<double>(c.col) / (cols - 1) : 0.0,
            static_cast<double>(state.t) / cfg.max_steps};
}

inline std::vector<Observation> observe_all(const EnvState& state, const EnvConfig& cfg) {
    std::vector<Observation> out;
    out.reserve(cfg.n_agents);
    for (std::size_t i = 0; i < cfg.n_agents; ++i) out.push_back(observe(state, cfg, i));
    return out;
}

inline std::pair<EnvState, std::vector<Observation>> reset(const EnvConfig& cfg) {
    cfg.validate();
    EnvState s;
    const auto starts = cfg.layout.starts();
    s.positions.assign(starts.begin(), starts.begin() + static_cast<std::ptrdiff_t>(cfg.n_agents));
    s.done.assign(cfg.n_agents, false);
    s.t = 0;
    auto obs = observe_all(s, cfg);
    return {std::move(s), std::move(obs)};
}

/// Applies one joint action in place. Agents move one at a time in index order;
/// a move succeeds iff the target is valid and no other agent currently stands
/// there. Done agents stay put and earn 0. Shared by `step` and the planner.
template <class Positions, class Done, class Actions, class Rewards>
void resolve_moves(const EnvConfig& cfg, Positions& positions, Done& done, const Actions& actions, Rewards& rewards) {
    const std::size_t n = cfg.n_agents;
    const auto goals = cfg.layout.goals();
    for (std::size_t i = 0; i < n; ++i) {
        if (done[i]) {
            rewards[i] = 0.0;
            continue;
        }
        const Cell target = moved(positions[i], actions[i]);
        bool free = cfg.layout.is_valid(target);
        for (std::size_t j = 0; free && j < n; ++j) {
            if (j != i && positions[j] == target) free = false;
        }
        if (free) positions[i] = target;
        if (positions[i] == goals[i]) {
            done[i] = true;
            rewards[i] = cfg.goal_reward;
        } else {
            rewards[i] = cfg.step_penalty;
        }
    }
}

inline StepResult step(const EnvState& state, const EnvConfig& cfg, std::span<const Action> joint_action) {
    if (joint_action.size() != cfg.n_agents) throw std::invalid_argument("joint action has wrong length");
    if (state.t >= cfg.max_steps) throw std::logic_error("episode already reached max_steps");
    if (std::all_of(state.done.begin(), state.done.end(), [](bool d) { return d; })) {
        throw std::logic_error("episode already finished");
    }
    StepResult out{.state = state, .rewards = std::vector<double>(cfg.n_agents, 0.0), .done = {}, .team_done = false};
    resolve_moves(cfg, out.state.positions, out.state.done, joint_action, out.rewards);
    out.state.t = state.t + 1;
    out.done = out.state.done;
    out.team_done = out.state.t >= cfg.max_steps ||
                    std::all_of(out.done.begin(), out.done.end(), [](bool d) { return d; });
    return out;
}

inline bool is_terminal(const EnvState& state, const EnvConfig& cfg) {
    return state.t >= cfg.max_steps || std::all_of(state.done.begin(), state.done.end(), [](bool d) { return d; });
}

inline std::string render_ascii(const EnvState& state, const EnvConfig& cfg) {
    const auto& layout = cfg.layout;
    std::string out;
    out.reserve(static_cast<std::size_t>((layout.cols() + 1) * layout.rows()));
    constexpr std::string_view upper = "RBGY";
    constexpr std::string_view lower = "rbgy";
    for (int r = 0; r < layout.rows(); ++r) {
        for (int c = 0; c < layout.cols(); ++c) {
            const Cell cell{r, c};
            char ch = '#';
            if (layout.is_valid(cell)) ch = layout.is_corridor(cell) ? '.' : ' ';
            for (std::size_t i = 0; i < cfg.n_agents; ++i) {
                if (layout.goals()[i] == cell) ch = lower[i];
            }
            for (std::size_t i = 0; i < cfg.n_agents && i < state.positions.size(); ++i) {
                if (state.positions[i] == cell) ch = upper[i];
            }
            out.push_back(ch);
        }
        out.push_back('\n');
    }
    return out;
}

// JSON layout override:
// {rows, cols, valid_cells:[[r,c]...], corridor_cells?:[[r,c]...], starts:{agent:[r,c]},
//  goals:{agent:[r,c]}, max_steps, goal_reward, step_penalty}
// Without corridor_cells, the corridor is every valid cell with no valid vertical neighbour.

namespace detail {

inline Cell cell_from_json(const nlohmann::json& j) {
    if (!j.is_array() || j.size() != 2) throw std::invalid_argument("cell must be a [row, col] pair");
    return {j.at(0).get<int>(), j.at(1).get<int>()};
}

inline std::vector<Cell> agent_cells_from_json(const nlohmann::json& j, const char* what) {
    if (!j.is_object()) throw std::invalid_argument(std::string(what) + " must map agent names to cells");
    std::vector<Cell> cells(j.size());
    for (const auto& [name, value] : j.items()) {
        const std::size_t idx = agent_index(name);
        if (idx >= j.size()) {
            throw std::invalid_argument(std::string(what) + ": agents must be a prefix of red, blue, green, yellow");
        }
        cells[idx] = cell_from_json(value);
    }
    return cells;
}

}  // namespace detail

inline EnvConfig env_from_json(const nlohmann::json& j) {
    const int rows = j.at("rows").get<int>();
    const int cols = j.at("cols").get<int>();
    std::vector<Cell> valid;
    for (const auto& c : j.at("valid_cells")) valid.push_back(detail::cell_from_json(c));
    std::vector<Cell> corridor;
    if (j.contains("corridor_cells")) {
        for (const auto& c : j.at("corridor_cells")) corridor.push_back(detail::cell_from_json(c));
    } else {
        auto is_valid = [&](Cell c) { return std::find(valid.begin(), valid.end(), c) != valid.end(); };
        for (const Cell& c : valid) {
            if (!is_valid({c.row - 1, c.col}) && !is_valid({c.row + 1, c.col})) corridor.push_back(c);
        }
    }
    auto starts = detail::agent_cells_from_json(j.at("starts"), "starts");
    auto goals = detail::agent_cells_from_json(j.at("goals"), "goals");
    const std::size_t n = starts.size();
    EnvConfig cfg{.layout = GridLayout(rows, cols, std::move(valid), std::move(corridor), std::move(starts),
                                       std::move(goals)),
                  .n_agents = n,
                  .max_steps = j.value("max_steps", 50),
                  .goal_reward = j.value("goal_reward", 5.0),
                  .step_penalty = j.value("step_penalty", -0.1)};
    cfg.validate();
    return cfg;
}

inline EnvConfig parse_env(std::string_view text) { return env_from_json(nlohmann::json::parse(text)); }

inline nlohmann::json env_to_json(const EnvConfig& cfg) {
    auto cells = [](std::span<const Cell> cs) {
        nlohmann::json arr = nlohmann::json::array();
        for (const Cell& c : cs) arr.push_back({c.row, c.col});
        return arr;
    };
    nlohmann::json starts = nlohmann::json::object(), goals = nlohmann::json::object();
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        const Cell s = cfg.layout.starts()[i], g = cfg.layout.goals()[i];
        starts[agent_name(i)] = {s.row, s.col};
        goals[agent_name(i)] = {g.row, g.col};
    }
    return {{"rows", cfg.layout.rows()},
            {"cols", cfg.layout.cols()},
            {"valid_cells", cells(cfg.layout.valid_cells())},
            {"corridor_cells", cells(cfg.layout.corridor_cells())},
            {"starts", starts},
            {"goals", goals},
            {"max_steps", cfg.max_steps},
            {"goal_reward", cfg.goal_reward},
            {"step_penalty", cfg.step_penalty}};
}

}  // namespace gvdn
