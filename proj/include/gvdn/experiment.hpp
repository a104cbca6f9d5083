#pragma once

// Experiment presets and multi-seed orchestration.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "learner.hpp"
#include "metrics.hpp"
#include "relnet.hpp"
#include "switch_env.hpp"

namespace gvdn {

struct Preset {
    EnvConfig env;
    RelationalNetwork network;
};

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"vdn2", "gb", "gc", "vdn3", "ge", "gf", "gg", "vdn4", "gi"};
    return names;
}

inline bool is_preset(const std::string& name) {
    for (const auto& p : preset_names()) {
        if (p == name) return true;
    }
    return false;
}

/// Relational networks for the six experiments (plus the VDN baselines).
/// Agent order: red, blue, green, yellow.
inline Preset preset(const std::string& name) {
    auto net = [](std::size_t n, std::vector<std::tuple<std::size_t, std::size_t, double>> edges) {
        std::vector<double> w(n * n, 0.0);
        for (auto [from, to, weight] : edges) w[from * n + to] = weight;
        return RelationalNetwork::from_matrix(n, std::move(w));
    };
    constexpr std::size_t red = 0, blue = 1, green = 2, yellow = 3;
    if (name == "vdn2") return {make_env(2), identity_network(2)};
    if (name == "vdn3") return {make_env(3), identity_network(3)};
    if (name == "vdn4") return {make_env(4), identity_network(4)};
    if (name == "gb") return {make_env(2), net(2, {{red, red, 1}, {blue, blue, 1}, {red, blue, 1}})};
    if (name == "gc") return {make_env(2), net(2, {{red, red, 1}, {blue, blue, 1}, {blue, red, 1}})};
    if (name == "ge") {
        return {make_env(3),
                net(3, {{red, red, 1}, {blue, blue, 1}, {green, green, 1}, {blue, red, 1}, {green, red, 1}})};
    }
    if (name == "gf") {
        return {make_env(3),
                net(3, {{red, red, 1}, {blue, blue, 1}, {green, green, 1}, {red, blue, 1}, {green, blue, 1}})};
    }
    if (name == "gg") {
        // Red's own reward barely counts, so it yields to both blue and green.
        return {make_env(3), net(3, {{red, red, 0.05},
                                     {blue, blue, 1},
                                     {green, green, 1},
                                     {red, green, 1},
                                     {red, blue, 1},
                                     {blue, green, 1}})};
    }
    if (name == "gi") {
        return {make_env(4), net(4, {{red, red, 1},
                                     {blue, blue, 1},
                                     {green, green, 1},
                                     {yellow, yellow, 1},
                                     {red, yellow, 1},
                                     {blue, yellow, 1},
                                     {green, yellow, 1}})};
    }
    throw std::invalid_argument("unknown preset: " + name);
}

struct ExperimentConfig {
    std::size_t n_agents = 2;
    std::string layout_file;           // optional JSON layout override
    std::string relnet = "identity";   // preset name, "identity", "vdn", or path to a network JSON file
    Hyperparams hyper = Hyperparams::for_agents(2);
    std::vector<std::uint64_t> seeds{1};
    std::string out_dir = "runs";
    std::size_t jobs = 1;
    bool resume = false;  // reuse per-seed results whose stored setup matches

    void validate() const {
        if (seeds.empty()) throw std::invalid_argument("no seeds given");
        if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
            throw std::invalid_argument("seeds must be distinct");
        }
        if (!layout_file.empty() && !std::filesystem::exists(layout_file)) {
            throw std::invalid_argument("layout file not found: " + layout_file);
        }
        if (relnet != "identity" && relnet != "vdn" && !is_preset(relnet) && !std::filesystem::exists(relnet)) {
            throw std::invalid_argument("relational network is neither a preset nor an existing file: " + relnet);
        }
        if (jobs == 0) throw std::invalid_argument("jobs must be positive");
        hyper.validate();
    }
};

/// Configuration for one of the named presets with its default episode budget.
inline ExperimentConfig preset_config(const std::string& name) {
    const Preset p = preset(name);
    ExperimentConfig cfg;
    cfg.n_agents = p.env.n_agents;
    cfg.relnet = name;
    cfg.hyper = Hyperparams::for_agents(p.env.n_agents);
    return cfg;
}

inline nlohmann::json hyper_to_json(const Hyperparams& h) {
    return {{"gamma", h.gamma},
            {"lr", h.lr},
            {"batch_size", h.batch_size},
            {"updates_per_episode", h.updates_per_episode},
            {"target_sync_every", h.target_sync_every},
            {"memory_capacity", h.memory_capacity},
            {"eps_start", h.eps_start},
            {"eps_end", h.eps_end},
            {"eps_decay_fraction", h.eps_decay_fraction},
            {"total_episodes", h.total_episodes},
            {"eval_every", h.eval_every},
            {"final_window", h.final_window},
            {"layer_sizes", h.layer_sizes}};
}

/// Missing keys keep the values already in `base`.
inline Hyperparams hyper_from_json(const nlohmann::json& j, Hyperparams base) {
    base.gamma = j.value("gamma", base.gamma);
    base.lr = j.value("lr", base.lr);
    base.batch_size = j.value("batch_size", base.batch_size);
    base.updates_per_episode = j.value("updates_per_episode", base.updates_per_episode);
    base.target_sync_every = j.value("target_sync_every", base.target_sync_every);
    base.memory_capacity = j.value("memory_capacity", base.memory_capacity);
    base.eps_start = j.value("eps_start", base.eps_start);
    base.eps_end = j.value("eps_end", base.eps_end);
    base.eps_decay_fraction = j.value("eps_decay_fraction", base.eps_decay_fraction);
    base.total_episodes = j.value("total_episodes", base.total_episodes);
    base.eval_every = j.value("eval_every", base.eval_every);
    base.final_window = j.value("final_window", base.final_window);
    base.layer_sizes = j.value("layer_sizes", base.layer_sizes);
    return base;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    return {{"n_agents", c.n_agents}, {"layout_file", c.layout_file}, {"relnet", c.relnet},
            {"hyperparams", hyper_to_json(c.hyper)}, {"seeds", c.seeds}, {"out_dir", c.out_dir},
            {"jobs", c.jobs}, {"resume", c.resume}};
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    c.relnet = j.value("relnet", c.relnet);
    c.n_agents = is_preset(c.relnet) ? preset(c.relnet).env.n_agents : j.value("n_agents", c.n_agents);
    c.layout_file = j.value("layout_file", c.layout_file);
    c.hyper = hyper_from_json(j.value("hyperparams", nlohmann::json::object()), Hyperparams::for_agents(c.n_agents));
    c.seeds = j.value("seeds", c.seeds);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.jobs = j.value("jobs", c.jobs);
    c.resume = j.value("resume", c.resume);
    return c;
}

struct ResolvedSetup {
    EnvConfig env;
    TeamRewardRule rule;
};

inline ResolvedSetup resolve_setup(const ExperimentConfig& c) {
    std::optional<EnvConfig> env;
    if (!c.layout_file.empty()) env = env_from_json(read_json(c.layout_file));
    if (is_preset(c.relnet)) {
        Preset p = preset(c.relnet);
        if (!env) env = p.env;
        if (env->n_agents != p.network.size()) throw std::invalid_argument("layout does not match the preset's team");
        return {*env, p.network};
    }
    if (!env) env = make_env(c.n_agents);
    if (c.relnet == "vdn") return {*env, UniformSum{}};
    if (c.relnet == "identity") return {*env, identity_network(env->n_agents)};
    return {*env, relnet_from_json(read_json(c.relnet), env->n_agents)};
}

/// Everything that determines a run's outcome apart from the seed.
inline nlohmann::json setup_fingerprint(const ResolvedSetup& s, const Hyperparams& h) {
    nlohmann::json rule = std::holds_alternative<UniformSum>(s.rule)
                              ? nlohmann::json("uniform-sum")
                              : relnet_to_json(std::get<RelationalNetwork>(s.rule));
    return {{"env", env_to_json(s.env)}, {"rule", rule}, {"hyperparams", hyper_to_json(h)}};
}

struct ExperimentOutcome {
    std::vector<RunResult> runs;           // seed order; reused runs carry only summaries
    std::optional<AggregateReport> report; // present with two or more seeds
};

using LogFn = std::function<void(const std::string&)>;

/// Trains every seed (in parallel up to `jobs`), writing per seed:
///   seed_<s>/curves.csv, seed_<s>/run.json, seed_<s>/checkpoint/
/// and at the top level config.json, plus aggregate.json / aggregate.csv with two or more seeds.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, const LogFn& log = {}) {
    cfg.validate();
    const ResolvedSetup setup = resolve_setup(cfg);
    const std::filesystem::path out(cfg.out_dir);
    std::filesystem::create_directories(out);
    write_json(config_to_json(cfg), out / "config.json");
    const nlohmann::json fingerprint = setup_fingerprint(setup, cfg.hyper);

    ExperimentOutcome outcome;
    outcome.runs.resize(cfg.seeds.size());
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto say = [&](const std::string& msg) {
        if (!log) return;
        std::lock_guard lock(log_mutex);
        log(msg);
    };

    auto worker = [&] {
        for (std::size_t k = next++; k < cfg.seeds.size(); k = next++) {
            const std::uint64_t seed = cfg.seeds[k];
            const auto dir = out / ("seed_" + std::to_string(seed));
            try {
                if (cfg.resume && std::filesystem::exists(dir / "run.json")) {
                    const auto stored = read_json(dir / "run.json");
                    if (stored.value("setup", nlohmann::json()) == fingerprint) {
                        outcome.runs[k] = run_summary_from_json(stored);
                        say("seed " + std::to_string(seed) + ": reused " + (dir / "run.json").string());
                        continue;
                    }
                }
                const auto started = std::chrono::steady_clock::now();
                RunResult r = run_training(setup.env, setup.rule, cfg.hyper, seed, [&](const EvalPoint& e) {
                    if (e.episode % (cfg.hyper.eval_every * 20) != 0) return;
                    std::string msg = "seed " + std::to_string(seed) + " episode " + std::to_string(e.episode) + ":";
                    for (double x : e.returns) {
                        char buf[32];
                        std::snprintf(buf, sizeof buf, " %.2f", x);
                        msg += buf;
                    }
                    say(msg + " [" + order_label(e.crossing_order) + "]");
                });
                write_csv(r, dir / "curves.csv");
                save_checkpoint(dir / "checkpoint", setup.env, r.final_params);
                auto summary = run_summary_to_json(r);
                summary["setup"] = fingerprint;
                summary["train_seconds"] =
                    std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
                write_json(summary, dir / "run.json");
                outcome.runs[k] = std::move(r);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const std::size_t threads = std::min(cfg.jobs, cfg.seeds.size());
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k]) continue;
        try {
            std::rethrow_exception(errors[k]);
        } catch (const std::exception& e) {
            throw std::runtime_error("seed " + std::to_string(cfg.seeds[k]) + ": " + e.what());
        }
    }
    if (outcome.runs.size() >= 2) {
        outcome.report = aggregate_runs(outcome.runs);
        write_json(report_to_json(*outcome.report, cfg.relnet), out / "aggregate.json");
        write_csv(*outcome.report, out / "aggregate.csv");
    }
    return outcome;
}

/// Aggregates every seed_*/run.json below `dir`.
inline AggregateReport aggregate_directory(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "run.json")) {
            files.push_back(entry.path() / "run.json");
        }
    }
    std::sort(files.begin(), files.end());
    std::vector<RunResult> runs;
    for (const auto& f : files) runs.push_back(run_summary_from_json(read_json(f)));
    return aggregate_runs(runs);
}

}  // namespace gvdn
