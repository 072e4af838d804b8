#pragma once

#include "spde/config.hpp"

#include <string>

namespace spde {

// Terminal-field statistics over paired controlled/uncontrolled trials
// (shared noise seeds).
struct EvalSummary {
    int trials = 0;
    Eigen::VectorXd controlled_mean;
    Eigen::VectorXd controlled_std;
    Eigen::VectorXd uncontrolled_mean;
    Eigen::VectorXd uncontrolled_std;
    double controlled_cost_mean = 0;
    double controlled_cost_std = 0;
    double uncontrolled_cost_mean = 0;
    double uncontrolled_cost_std = 0;
};

EvalSummary evaluate_policy(const PolicyParams& params, const ExperimentConfig& config,
                            int n_trials, std::uint64_t eval_seed = 0x5eed);

// Training CSV serialization; floats carry 17 significant digits so the
// file re-parses to the in-memory report exactly.
std::string training_csv(const TrainReport& report);
TrainReport parse_training_csv(const std::string& text);

std::string eval_csv(const EvalSummary& summary, const Grid& grid);

// Fig.-style static plots as self-contained SVG.
std::string terminal_profile_svg(const EvalSummary& summary, const ExperimentConfig& config);
std::string rollout_contour_svg(const Trajectory& traj, const ExperimentConfig& config);

// Full experiment run: config snapshot, training CSV, checkpoints, eval
// CSV and plots under out_dir. Returns the final parameters.
struct ExperimentResult {
    PolicyParams params;
    TrainReport report;
    EvalSummary eval;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const std::string& out_dir,
                                int eval_trials = 200, bool quiet = false);

} // namespace spde
