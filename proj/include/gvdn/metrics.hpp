#pragma once

// Greedy evaluation, multi-run aggregation (mean and Student-t 95% interval)
// and the CSV/JSON files a training run leaves behind.

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "agent_nets.hpp"
#include "json.hpp"
#include "relnet.hpp"
#include "switch_env.hpp"

namespace gvdn {

using AgentOrder = std::vector<std::size_t>;

struct EvalPoint {
    std::size_t episode = 0;  // number of training episodes completed
    std::vector<double> returns;
    AgentOrder crossing_order;
    friend bool operator==(const EvalPoint&, const EvalPoint&) = default;
};

struct RunResult {
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> train_curve;  // [episode][agent], epsilon-greedy returns
    std::vector<double> losses;                    // every minibatch loss, in update order
    std::vector<std::size_t> updates_per_episode;  // how many entries of `losses` each episode produced
    std::vector<EvalPoint> eval_curve;
    std::vector<double> final_returns;
    AgentOrder crossing_order_final;
    std::vector<MlpParams<double>> final_params;

    friend bool operator==(const RunResult&, const RunResult&) = default;
};

struct Rollout {
    std::vector<double> returns;
    AgentOrder crossing_order;
    std::vector<EnvState> states;  // states[0] is the reset state
    std::vector<std::vector<Action>> actions;
};

/// Agents ordered by the first timestep they stand in a corridor cell; ties by index.
inline AgentOrder crossing_order(std::span<const EnvState> trajectory, const EnvConfig& cfg) {
    std::vector<std::pair<std::size_t, std::size_t>> entries;
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        for (std::size_t t = 0; t < trajectory.size(); ++t) {
            if (cfg.layout.is_corridor(trajectory[t].positions[i])) {
                entries.emplace_back(t, i);
                break;
            }
        }
    }
    std::sort(entries.begin(), entries.end());
    AgentOrder order;
    for (const auto& e : entries) order.push_back(e.second);
    return order;
}

/// Room id of every valid cell (connected non-corridor regions), -1 on corridor cells.
inline std::vector<int> room_labels(const GridLayout& layout) {
    std::vector<int> label(layout.num_valid(), -1);
    int next = 0;
    for (std::size_t k = 0; k < layout.num_valid(); ++k) {
        if (label[k] >= 0 || layout.is_corridor(layout.cell_at(k))) continue;
        std::vector<std::size_t> stack{k};
        label[k] = next;
        while (!stack.empty()) {
            const Cell c = layout.cell_at(stack.back());
            stack.pop_back();
            for (Action a : {Action::Left, Action::Right, Action::Up, Action::Down}) {
                const Cell m = moved(c, a);
                if (!layout.is_valid(m) || layout.is_corridor(m)) continue;
                const auto idx = static_cast<std::size_t>(layout.cell_index(m));
                if (label[idx] < 0) {
                    label[idx] = next;
                    stack.push_back(idx);
                }
            }
        }
        ++next;
    }
    return label;
}

/// Agents ordered by the first timestep they stand in a room other than their
/// starting one; ties by index. Agents that never get across are omitted.
inline AgentOrder traversal_order(std::span<const EnvState> trajectory, const EnvConfig& cfg) {
    const auto rooms = room_labels(cfg.layout);
    auto room = [&](Cell c) { return rooms[static_cast<std::size_t>(cfg.layout.cell_index(c))]; };
    std::vector<std::pair<std::size_t, std::size_t>> arrivals;
    for (std::size_t i = 0; i < cfg.n_agents; ++i) {
        const int home = room(cfg.layout.starts()[i]);
        for (std::size_t t = 0; t < trajectory.size(); ++t) {
            const int r = room(trajectory[t].positions[i]);
            if (r >= 0 && r != home) {
                arrivals.emplace_back(t, i);
                break;
            }
        }
    }
    std::sort(arrivals.begin(), arrivals.end());
    AgentOrder order;
    for (const auto& e : arrivals) order.push_back(e.second);
    return order;
}

inline std::string order_label(const AgentOrder& order) {
    if (order.empty()) return "none";
    std::string s;
    for (std::size_t k = 0; k < order.size(); ++k) {
        if (k) s += '-';
        s += agent_name(order[k]);
    }
    return s;
}

/// One epsilon = 0 episode from the reset state.
template <typename Scalar>
Rollout rollout_greedy(const AgentNets<Scalar>& nets, const EnvConfig& cfg) {
    auto [state, obs] = reset(cfg);
    Rollout out;
    out.returns.assign(cfg.n_agents, 0.0);
    out.states.push_back(state);
    while (!is_terminal(state, cfg)) {
        auto joint = greedy_joint_action(nets, obs, state.done);
        auto res = step(state, cfg, joint);
        for (std::size_t i = 0; i < cfg.n_agents; ++i) out.returns[i] += res.rewards[i];
        state = std::move(res.state);
        obs = observe_all(state, cfg);
        out.states.push_back(state);
        out.actions.push_back(std::move(joint));
    }
    out.crossing_order = crossing_order(out.states, cfg);
    return out;
}

template <typename Scalar>
std::vector<double> evaluate_greedy(const AgentNets<Scalar>& nets, const EnvConfig& cfg) {
    return rollout_greedy(nets, cfg).returns;
}

/// Greedy rollout from bare prediction networks (e.g. a loaded checkpoint).
inline Rollout rollout_checkpoint(const std::vector<MlpParams<double>>& params, const EnvConfig& cfg) {
    AgentNets<double> nets{params, params, {}};
    return rollout_greedy(nets, cfg);
}

struct AgentSummary {
    double mean = 0.0;
    double ci95 = 0.0;  // half-width
};

struct AggregateReport {
    std::size_t runs = 0;
    std::vector<AgentSummary> agents;
    double collective = 0.0;
    std::map<std::string, double> ordering_frequency;
};

/// Two-sided 95% Student-t multiplier with `dof` degrees of freedom.
inline double t_multiplier_95(std::size_t dof) {
    if (dof == 0) throw std::invalid_argument("t multiplier needs at least one degree of freedom");
    return boost::math::quantile(boost::math::students_t(static_cast<double>(dof)), 0.975);
}

/// Mean and 95% half-width t_{0.975,k-1} s / sqrt(k) of a sample.
inline AgentSummary mean_ci95(std::span<const double> xs) {
    const std::size_t k = xs.size();
    if (k < 2) throw std::invalid_argument("confidence interval needs at least two values");
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(k);
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(k - 1));
    return {mean, t_multiplier_95(k - 1) * sd / std::sqrt(static_cast<double>(k))};
}

inline AggregateReport aggregate_runs(std::span<const RunResult> results) {
    if (results.size() < 2) throw std::invalid_argument("aggregation needs at least two runs");
    const std::size_t n = results.front().final_returns.size();
    // Sorting makes the float sums independent of run order.
    std::vector<std::vector<double>> per_agent(n);
    AggregateReport report;
    report.runs = results.size();
    for (const auto& r : results) {
        if (r.final_returns.size() != n) throw std::invalid_argument("runs disagree on agent count");
        for (std::size_t i = 0; i < n; ++i) per_agent[i].push_back(r.final_returns[i]);
        report.ordering_frequency[order_label(r.crossing_order_final)] += 1.0;
    }
    for (auto& xs : per_agent) {
        std::sort(xs.begin(), xs.end());
        report.agents.push_back(mean_ci95(xs));
        report.collective += report.agents.back().mean;
    }
    for (auto& [label, count] : report.ordering_frequency) count /= static_cast<double>(results.size());
    return report;
}

/// Mean of the last `window` evaluation points.
inline std::vector<double> final_window_mean(std::span<const EvalPoint> curve, std::size_t window) {
    if (curve.empty()) return {};
    const std::size_t k = std::min(window, curve.size());
    std::vector<double> mean(curve.back().returns.size(), 0.0);
    for (std::size_t p = curve.size() - k; p < curve.size(); ++p) {
        for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += curve[p].returns[i];
    }
    for (double& m : mean) m /= static_cast<double>(k);
    return mean;
}

// ---- files -----------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double x) {
    if (!std::isfinite(x)) throw std::invalid_argument("refusing to write a non-finite value");
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
    return os.str();
}

inline std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

}  // namespace detail

/// Per-episode curves as read back from a run CSV. Eval and loss cells are empty
/// on episodes without an evaluation or without updates.
struct CurveTable {
    std::vector<std::size_t> episodes;
    std::vector<std::vector<double>> train;
    std::vector<std::optional<std::vector<double>>> eval;
    std::vector<std::optional<double>> mean_loss;
};

inline std::string curve_csv_header(std::size_t n) {
    std::string h = "episode";
    for (std::size_t i = 0; i < n; ++i) h += ",agent_" + std::to_string(i) + "_train";
    for (std::size_t i = 0; i < n; ++i) h += ",agent_" + std::to_string(i) + "_eval";
    h += ",mean_loss";
    return h;
}

/// Columns: episode, agent_0_train..agent_{n-1}_train, agent_0_eval..agent_{n-1}_eval, mean_loss.
/// Episodes are 1-based; eval cells hold the greedy returns measured after that episode.
inline void write_csv(const RunResult& r, const std::filesystem::path& path) {
    const std::size_t n = r.train_curve.empty() ? 0 : r.train_curve.front().size();
    auto out = detail::open_for_write(path);
    out << curve_csv_header(n) << '\n';
    std::size_t next_eval = 0, loss_pos = 0;
    for (std::size_t ep = 0; ep < r.train_curve.size(); ++ep) {
        out << ep + 1;
        for (double x : r.train_curve[ep]) out << ',' << detail::fmt_double(x);
        const bool has_eval = next_eval < r.eval_curve.size() && r.eval_curve[next_eval].episode == ep + 1;
        for (std::size_t i = 0; i < n; ++i) {
            out << ',';
            if (has_eval) out << detail::fmt_double(r.eval_curve[next_eval].returns[i]);
        }
        if (has_eval) ++next_eval;
        out << ',';
        const std::size_t updates = ep < r.updates_per_episode.size() ? r.updates_per_episode[ep] : 0;
        if (updates > 0) {
            double sum = 0.0;
            for (std::size_t k = 0; k < updates; ++k) sum += r.losses.at(loss_pos + k);
            out << detail::fmt_double(sum / static_cast<double>(updates));
        }
        loss_pos += updates;
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline CurveTable read_curve_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("empty CSV: " + path.string());
    const auto header = detail::split_csv(line);
    if (header.size() < 2 || (header.size() - 2) % 2 != 0) throw std::runtime_error("malformed CSV header");
    const std::size_t n = (header.size() - 2) / 2;
    if (line != curve_csv_header(n)) throw std::runtime_error("unexpected CSV header");
    CurveTable table;
    while (std::getline(in, line)) {
        const auto f = detail::split_csv(line);
        if (f.size() != header.size()) throw std::runtime_error("CSV row has wrong field count");
        table.episodes.push_back(std::stoul(f[0]));
        std::vector<double> train, eval;
        for (std::size_t i = 0; i < n; ++i) train.push_back(std::stod(f[1 + i]));
        table.train.push_back(std::move(train));
        if (!f[1 + n].empty()) {
            for (std::size_t i = 0; i < n; ++i) eval.push_back(std::stod(f[1 + n + i]));
            table.eval.emplace_back(std::move(eval));
        } else {
            table.eval.emplace_back(std::nullopt);
        }
        table.mean_loss.push_back(f.back().empty() ? std::nullopt : std::optional<double>(std::stod(f.back())));
    }
    return table;
}

inline nlohmann::json report_to_json(const AggregateReport& rep, const std::string& label = "") {
    nlohmann::json agents = nlohmann::json::object();
    for (std::size_t i = 0; i < rep.agents.size(); ++i) {
        agents[agent_name(i)] = {{"mean", rep.agents[i].mean}, {"ci95", rep.agents[i].ci95}};
    }
    nlohmann::json j{{"runs", rep.runs},
                     {"agents", agents},
                     {"collective", rep.collective},
                     {"ordering_frequency", rep.ordering_frequency}};
    if (!label.empty()) j["label"] = label;
    return j;
}

/// One row per agent plus a collective row.
inline void write_csv(const AggregateReport& rep, const std::filesystem::path& path) {
    auto out = detail::open_for_write(path);
    out << "agent,mean,ci95\n";
    for (std::size_t i = 0; i < rep.agents.size(); ++i) {
        out << agent_name(i) << ',' << detail::fmt_double(rep.agents[i].mean) << ','
            << detail::fmt_double(rep.agents[i].ci95) << '\n';
    }
    out << "collective," << detail::fmt_double(rep.collective) << ",\n";
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

/// Run summary without the per-episode curves and parameters.
inline nlohmann::json run_summary_to_json(const RunResult& r) {
    nlohmann::json evals = nlohmann::json::array();
    for (const auto& e : r.eval_curve) {
        evals.push_back({{"episode", e.episode}, {"returns", e.returns}, {"crossing_order", e.crossing_order}});
    }
    return {{"seed", r.seed},
            {"final_returns", r.final_returns},
            {"crossing_order_final", r.crossing_order_final},
            {"eval_curve", evals}};
}

inline RunResult run_summary_from_json(const nlohmann::json& j) {
    RunResult r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.final_returns = j.at("final_returns").get<std::vector<double>>();
    r.crossing_order_final = j.at("crossing_order_final").get<AgentOrder>();
    for (const auto& e : j.at("eval_curve")) {
        r.eval_curve.push_back({e.at("episode").get<std::size_t>(), e.at("returns").get<std::vector<double>>(),
                                e.at("crossing_order").get<AgentOrder>()});
    }
    return r;
}

inline void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
    auto out = detail::open_for_write(path);
    out << j.dump(2) << '\n';
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    return nlohmann::json::parse(in);
}

// Checkpoint directory: env.json plus agent_<i>.json per prediction network.

inline void save_checkpoint(const std::filesystem::path& dir, const EnvConfig& cfg,
                            const std::vector<MlpParams<double>>& params) {
    std::filesystem::create_directories(dir);
    write_json(env_to_json(cfg), dir / "env.json");
    for (std::size_t i = 0; i < params.size(); ++i) {
        write_json(params_to_json(params[i]), dir / ("agent_" + std::to_string(i) + ".json"));
    }
}

struct Checkpoint {
    EnvConfig env;
    std::vector<MlpParams<double>> params;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    Checkpoint ck{env_from_json(read_json(dir / "env.json")), {}};
    for (std::size_t i = 0; i < ck.env.n_agents; ++i) {
        ck.params.push_back(params_from_json<double>(read_json(dir / ("agent_" + std::to_string(i) + ".json"))));
    }
    return ck;
}

}  // namespace gvdn
