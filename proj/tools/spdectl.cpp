#include "spde/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitConfigError = 2;
constexpr int kExitNumericalAbort = 3;

std::string output_root() {
    if (const char* env = std::getenv("SPDE_OUTPUT_ROOT")) return env;
    return "runs";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Variational policy optimization for stochastic PDEs"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, preset_name, out_dir;
    int trials = 200;
    int iterations_override = -1;

    auto* run = app.add_subcommand("run", "train a policy from a config file");
    run->add_option("config", config_path, "config file")->required();
    run->add_option("--output", out_dir, "output directory (default <root>/<name>)");
    run->add_option("--trials", trials, "evaluation trials after training");
    run->add_option("--iterations", iterations_override, "override training iterations");

    auto* eval = app.add_subcommand("eval", "evaluate a trained policy");
    eval->add_option("checkpoint", checkpoint_path, "policy checkpoint")->required();
    eval->add_option("config", config_path, "config file")->required();
    eval->add_option("--trials", trials, "number of paired trials");
    eval->add_option("--output", out_dir, "output directory");

    auto* presets = app.add_subcommand("presets", "list or dump built-in presets");
    auto* presets_list = presets->add_subcommand("list", "list preset names");
    auto* presets_dump = presets->add_subcommand("dump", "print one preset as config text");
    presets_dump->add_option("name", preset_name, "preset name")->required();
    presets->require_subcommand(1);

    auto* validate = app.add_subcommand("validate", "check a config file");
    validate->add_option("config", config_path, "config file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (presets_list->parsed()) {
            for (const auto& name : spde::preset_names()) std::cout << name << "\n";
            return 0;
        }
        if (presets_dump->parsed()) {
            std::cout << spde::dump_config(spde::preset(preset_name));
            return 0;
        }

        spde::ExperimentConfig config;
        try {
            config = spde::load_config(config_path);
            if (validate->parsed()) {
                std::cout << "ok: " << config_path << "\n";
                return 0;
            }
        } catch (const std::exception& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitConfigError;
        }

        if (run->parsed()) {
            if (iterations_override > 0) config.iterations = iterations_override;
            const std::string dir = out_dir.empty()
                                        ? output_root() + "/" +
                                              (config.name.empty() ? "experiment" : config.name)
                                        : out_dir;
            try {
                spde::run_experiment(config, dir, trials);
            } catch (const std::runtime_error& e) {
                std::cerr << "numerical abort: " << e.what() << "\n";
                return kExitNumericalAbort;
            }
            std::cout << "artifacts written to " << dir << "\n";
            return 0;
        }

        if (eval->parsed()) {
            const spde::PolicyParams params = spde::load_checkpoint(checkpoint_path);
            spde::EvalSummary summary;
            try {
                summary = spde::evaluate_policy(params, config, trials);
            } catch (const std::runtime_error& e) {
                std::cerr << "numerical abort: " << e.what() << "\n";
                return kExitNumericalAbort;
            }
            const std::string csv = spde::eval_csv(summary, config.grid());
            if (out_dir.empty()) {
                std::cout << csv;
            } else {
                std::filesystem::create_directories(out_dir);
                std::ofstream f(out_dir + "/eval.csv");
                f << csv;
                std::ofstream p(out_dir + "/terminal_profile.svg");
                p << spde::terminal_profile_svg(summary, config);
                std::cout << "evaluation written to " << out_dir << "\n";
            }
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumericalAbort;
    }
    return 0;
}
