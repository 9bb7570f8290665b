#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "recon/pipeline.hpp"

namespace {

struct CliOptions {
    std::string domain = "salp";
    std::vector<std::string> instances;
    int width = 8;
    int height = 8;
    int num_agents = 2;
    int num_instances = 1;
    std::string method = "recon";
    double update_fraction = 0.5;
    double slack = 0.0;
    double nse_tolerance = 0.0;
    double epsilon = 1e-4;
    int episodes = 30;
    int horizon = 0;
    std::vector<std::uint64_t> seeds{0};
    double alpha1 = 0.5;
    double alpha2 = 0.5;
    double wall_density = 0.05;
    double hazard_density = 0.10;
    bool ensure_avoidable = false;
    int max_retries = 200;
    std::string out = "-";
    std::string timings;
};

recon::ExperimentConfig to_config(const CliOptions& opt) {
    recon::ExperimentConfig config;
    config.domain = recon::domain_from_name(opt.domain);
    config.instance_files = opt.instances;
    config.width = opt.width;
    config.height = opt.height;
    config.num_agents = opt.num_agents;
    config.num_instances = opt.num_instances;
    config.method = recon::method_from_name(opt.method);
    config.update_fraction = opt.update_fraction;
    config.slack = opt.slack;
    config.nse_tolerance = opt.nse_tolerance;
    config.epsilon = opt.epsilon;
    config.episodes = opt.episodes;
    config.horizon = opt.horizon;
    config.seeds = opt.seeds;
    config.considerate_alpha1 = opt.alpha1;
    config.considerate_alpha2 = opt.alpha2;
    config.gen.wall_density = opt.wall_density;
    config.gen.hazard_density = opt.hazard_density;
    config.gen.ensure_avoidable = opt.ensure_avoidable;
    config.gen.max_retries = opt.max_retries;
    config.validate();
    return config;
}

void write_text(const std::string& path, const std::string& content) {
    if (path == "-") {
        std::cout << content;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw recon::InputError("cannot open output file " + path);
    out << content;
}

void emit_rows(const CliOptions& opt, const std::vector<recon::ResultRow>& rows) {
    std::ostringstream csv;
    recon::write_results_csv(rows, csv);
    write_text(opt.out, csv.str());
    if (!opt.timings.empty()) {
        std::ostringstream timing_csv;
        recon::write_timings_csv(rows, timing_csv);
        write_text(opt.timings, timing_csv.str());
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw recon::InputError("cannot open instance file " + path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent negative-side-effect mitigation toolkit"};
    app.require_subcommand(1);
    app.set_config("--config")->description(
        "key=value file with the long option names as keys");

    CliOptions opt;
    app.add_option("--domain", opt.domain, "salp, warehouse or overcooked")
        ->capture_default_str();
    app.add_option("--instance", opt.instances,
                   "instance file; repeat for several (omit to generate)");
    app.add_option("--width", opt.width, "generated grid width")
        ->capture_default_str();
    app.add_option("--height", opt.height, "generated grid height")
        ->capture_default_str();
    app.add_option("--num-agents", opt.num_agents, "agents per generated instance")
        ->capture_default_str();
    app.add_option("--num-instances", opt.num_instances,
                   "generated instances per seed")
        ->capture_default_str();
    app.add_option("--method", opt.method,
                   "naive, difference-reward, considerate, recon, "
                   "gen-recon-no-cf or gen-recon-cf")
        ->capture_default_str();
    app.add_option("--update-fraction", opt.update_fraction,
                   "fraction of agents that replan")
        ->capture_default_str();
    app.add_option("--slack", opt.slack, "task-value slack for the replan")
        ->capture_default_str();
    app.add_option("--nse-tolerance", opt.nse_tolerance,
                   "penalty level below which nobody replans")
        ->capture_default_str();
    app.add_option("--epsilon", opt.epsilon, "blame rescaling constant")
        ->capture_default_str();
    app.add_option("--episodes", opt.episodes, "rollout episodes")
        ->capture_default_str();
    app.add_option("--horizon", opt.horizon,
                   "rollout horizon (0 picks 4*(width+height))")
        ->capture_default_str();
    app.add_option("--seeds", opt.seeds, "comma-separated seed list")
        ->delimiter(',')
        ->capture_default_str();
    app.add_option("--alpha1", opt.alpha1, "considerate selfish weight")
        ->capture_default_str();
    app.add_option("--alpha2", opt.alpha2, "considerate care weight")
        ->capture_default_str();
    app.add_option("--wall-density", opt.wall_density, "generator wall density")
        ->capture_default_str();
    app.add_option("--hazard-density", opt.hazard_density,
                   "generator coral/corridor/bin density")
        ->capture_default_str();
    app.add_flag("--ensure-avoidable", opt.ensure_avoidable,
                 "only generate instances whose penalty a full update removes");
    app.add_option("--max-retries", opt.max_retries, "generator retry budget")
        ->capture_default_str();
    app.add_option("--out", opt.out, "results CSV path, - for stdout")
        ->capture_default_str();
    app.add_option("--timings", opt.timings,
                   "optional per-stage wall-clock CSV path");

    auto* solve = app.add_subcommand("solve", "run one method on the instances");
    solve->fallthrough();

    std::vector<double> fractions;
    auto* sweep_fraction_cmd =
        app.add_subcommand("sweep-fraction", "rerun per update fraction");
    sweep_fraction_cmd->fallthrough();
    sweep_fraction_cmd
        ->add_option("--fractions", fractions, "comma-separated fractions")
        ->delimiter(',')
        ->required();

    std::vector<int> agent_counts;
    std::vector<std::string> methods;
    auto* sweep_agents_cmd =
        app.add_subcommand("sweep-agents", "regenerate per agent count");
    sweep_agents_cmd->fallthrough();
    sweep_agents_cmd
        ->add_option("--agent-counts", agent_counts, "comma-separated counts")
        ->delimiter(',')
        ->required();
    sweep_agents_cmd
        ->add_option("--methods", methods,
                     "comma-separated methods (defaults to --method)")
        ->delimiter(',');

    std::string out_dir = ".";
    auto* gen_cmd = app.add_subcommand("gen-instances", "write generated instances");
    gen_cmd->fallthrough();
    gen_cmd->add_option("--out-dir", out_dir, "directory for the instance files")
        ->capture_default_str();

    std::vector<std::string> validate_files;
    auto* validate_cmd =
        app.add_subcommand("validate-instance", "parse and check instance files");
    validate_cmd->fallthrough();
    validate_cmd->add_option("files", validate_files, "instance files")
        ->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (validate_cmd->parsed()) {
            for (const auto& file : validate_files) {
                const auto inst = recon::parse_instance(read_file(file));
                std::cout << file << ": ok (" << recon::domain_name(inst.domain)
                          << ' ' << inst.width << 'x' << inst.height << ", "
                          << inst.num_agents() << " agents)\n";
            }
            return 0;
        }
        if (gen_cmd->parsed()) {
            const auto config = to_config(opt);
            if (!config.instance_files.empty()) {
                throw recon::InputError("gen-instances generates; drop --instance");
            }
            std::filesystem::create_directories(out_dir);
            for (const auto seed : config.seeds) {
                for (int k = 0; k < config.num_instances; ++k) {
                    const auto inst = recon::generate_instance(
                        config.domain, config.width, config.height,
                        config.num_agents, recon::mix_seed(seed, k), config.gen);
                    std::ostringstream name;
                    name << recon::domain_name(config.domain) << '-'
                         << config.width << 'x' << config.height << "-n"
                         << config.num_agents << "-s" << seed << "-i" << k
                         << ".txt";
                    const auto path =
                        std::filesystem::path(out_dir) / name.str();
                    write_text(path.string(), recon::serialize_instance(inst));
                    std::cout << path.string() << "\n";
                }
            }
            return 0;
        }
        if (solve->parsed()) {
            const auto config = to_config(opt);
            emit_rows(opt, recon::run_pipeline(config));
            return 0;
        }
        if (sweep_fraction_cmd->parsed()) {
            const auto config = to_config(opt);
            emit_rows(opt, recon::sweep_fraction(config, fractions));
            return 0;
        }
        if (sweep_agents_cmd->parsed()) {
            const auto config = to_config(opt);
            std::vector<recon::Method> parsed_methods;
            if (methods.empty()) {
                parsed_methods.push_back(config.method);
            } else {
                for (const auto& name : methods) {
                    parsed_methods.push_back(recon::method_from_name(name));
                }
            }
            emit_rows(opt,
                      recon::sweep_agents(config, agent_counts, parsed_methods));
            return 0;
        }
        std::cerr << "error: no command selected\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
