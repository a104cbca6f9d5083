// gvdn: train, evaluate and inspect VDN / G-VDN agents on the multi-agent switch grid.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "gvdn.hpp"

namespace {

// "1-10", "1,4,7" or a mix such as "1-3,8".
std::vector<std::uint64_t> parse_seeds(const std::string& text) {
    std::vector<std::uint64_t> seeds;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const std::size_t comma = text.find(',', pos);
        const std::string part = text.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        const std::size_t dash = part.find('-');
        if (dash == std::string::npos) {
            seeds.push_back(std::stoull(part));
        } else {
            const std::uint64_t lo = std::stoull(part.substr(0, dash)), hi = std::stoull(part.substr(dash + 1));
            if (hi < lo) throw std::invalid_argument("bad seed range: " + part);
            for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
        }
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    if (seeds.empty()) throw std::invalid_argument("no seeds in '" + text + "'");
    return seeds;
}

void print_rollout(const gvdn::Rollout& r, const gvdn::EnvConfig& cfg, bool frames) {
    if (frames) {
        for (std::size_t t = 0; t < r.states.size(); ++t) {
            std::cout << "t=" << t << '\n' << gvdn::render_ascii(r.states[t], cfg) << '\n';
        }
    }
    nlohmann::json out;
    out["returns"] = r.returns;
    double total = 0.0;
    for (double x : r.returns) total += x;
    out["collective"] = total;
    out["crossing_order"] = gvdn::order_label(r.crossing_order);
    out["steps"] = r.actions.size();
    std::cout << out.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Value decomposition with relational team rewards on the switch grid"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "Train one configuration over several seeds");
    std::string preset_name, config_file, seeds_text = "1", out_dir = "runs", relnet_arg, layout_arg;
    std::optional<std::size_t> episodes, agents;
    std::size_t jobs = 1;
    bool resume = false;
    train->add_option("--preset", preset_name, "Named experiment: vdn2 gb gc vdn3 ge gf gg vdn4 gi");
    train->add_option("--config", config_file, "Experiment JSON file");
    train->add_option("--agents", agents, "Team size when no preset is given");
    train->add_option("--relnet", relnet_arg, "Network JSON file, 'identity' or 'vdn'");
    train->add_option("--layout", layout_arg, "Layout JSON file");
    train->add_option("--seeds", seeds_text, "Seeds, e.g. 1-10 or 1,2,5");
    train->add_option("--episodes", episodes, "Override the episode budget");
    train->add_option("--out", out_dir, "Output directory");
    train->add_option("--jobs", jobs, "Seeds trained in parallel")->check(CLI::PositiveNumber);
    train->add_flag("--resume", resume, "Reuse finished seeds with an identical setup");

    // oracle
    auto* oracle = app.add_subcommand("oracle", "Solve for the optimal joint policy");
    std::string oracle_preset, oracle_relnet, oracle_layout;
    std::size_t oracle_agents = 2;
    bool oracle_frames = false;
    oracle->add_option("--preset", oracle_preset, "Named experiment");
    oracle->add_option("--agents", oracle_agents, "Team size when no preset is given");
    oracle->add_option("--relnet", oracle_relnet, "Network JSON file");
    oracle->add_option("--layout", oracle_layout, "Layout JSON file");
    oracle->add_flag("--render", oracle_frames, "Print the optimal trajectory");

    // eval / render
    auto* eval = app.add_subcommand("eval", "Greedy rollout of a saved checkpoint");
    std::string eval_ckpt;
    eval->add_option("--checkpoint", eval_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);
    auto* render = app.add_subcommand("render", "Print every frame of a checkpoint's greedy rollout");
    std::string render_ckpt;
    render->add_option("--checkpoint", render_ckpt, "Checkpoint directory")->required()->check(CLI::ExistingDirectory);

    // aggregate
    auto* aggregate = app.add_subcommand("aggregate", "Summarise the seeds of a finished experiment");
    std::string agg_dir;
    aggregate->add_option("--in", agg_dir, "Experiment output directory")->required()->check(CLI::ExistingDirectory);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            gvdn::ExperimentConfig cfg;
            if (!config_file.empty()) {
                cfg = gvdn::config_from_json(gvdn::read_json(config_file));
            } else if (!preset_name.empty()) {
                cfg = gvdn::preset_config(preset_name);
            } else {
                cfg.n_agents = agents.value_or(2);
                cfg.hyper = gvdn::Hyperparams::for_agents(cfg.n_agents);
            }
            if (!relnet_arg.empty()) cfg.relnet = relnet_arg;
            if (!layout_arg.empty()) cfg.layout_file = layout_arg;
            if (agents && !gvdn::is_preset(cfg.relnet)) cfg.n_agents = *agents;
            if (train->count("--seeds") || config_file.empty()) cfg.seeds = parse_seeds(seeds_text);
            if (train->count("--out") || config_file.empty()) cfg.out_dir = out_dir;
            if (episodes) cfg.hyper.total_episodes = *episodes;
            if (train->count("--jobs")) cfg.jobs = jobs;
            cfg.resume = cfg.resume || resume;

            const auto outcome = gvdn::run_experiment(cfg, [](const std::string& msg) { std::cerr << msg << '\n'; });
            for (const auto& r : outcome.runs) {
                std::cout << "seed " << r.seed << ":";
                for (double x : r.final_returns) std::cout << ' ' << x;
                std::cout << " [" << gvdn::order_label(r.crossing_order_final) << "]\n";
            }
            if (outcome.report) std::cout << gvdn::report_to_json(*outcome.report, cfg.relnet).dump(2) << '\n';
        } else if (*oracle) {
            gvdn::ResolvedSetup setup{gvdn::make_env(2), gvdn::UniformSum{}};
            if (!oracle_preset.empty()) {
                auto p = gvdn::preset(oracle_preset);
                setup = {p.env, p.network};
            } else {
                setup.env = oracle_layout.empty() ? gvdn::make_env(oracle_agents)
                                                  : gvdn::env_from_json(gvdn::read_json(oracle_layout));
                setup.rule = oracle_relnet.empty()
                                 ? gvdn::identity_network(setup.env.n_agents)
                                 : gvdn::relnet_from_json(gvdn::read_json(oracle_relnet), setup.env.n_agents);
            }
            const auto& env = setup.env;
            const auto& rule = setup.rule;
            const auto sol = gvdn::solve(env, rule);
            if (oracle_frames) {
                for (std::size_t t = 0; t < sol.trajectory.size(); ++t) {
                    std::cout << "t=" << t << '\n' << gvdn::render_ascii(sol.trajectory[t], env) << '\n';
                }
            }
            std::cout << gvdn::oracle_report(sol).dump(2) << '\n';
        } else if (*eval || *render) {
            const auto ckpt = gvdn::load_checkpoint(*eval ? eval_ckpt : render_ckpt);
            print_rollout(gvdn::rollout_checkpoint(ckpt.params, ckpt.env), ckpt.env, static_cast<bool>(*render));
        } else if (*aggregate) {
            const auto report = gvdn::aggregate_directory(agg_dir);
            const std::filesystem::path dir(agg_dir);
            gvdn::write_json(gvdn::report_to_json(report, dir.filename().string()), dir / "aggregate.json");
            gvdn::write_csv(report, dir / "aggregate.csv");
            std::cout << gvdn::report_to_json(report, dir.filename().string()).dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
