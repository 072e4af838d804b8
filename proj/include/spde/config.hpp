#pragma once

#include "spde/models.hpp"
#include "spde/train.hpp"

#include <string>
#include <vector>

namespace spde {

// Rectangular target region in domain coordinates; resolved to grid nodes
// when the experiment is assembled. A region that captures no node falls
// back to the node nearest its center.
struct RegionSpec {
    double xlo = 0, xhi = 0;
    double ylo = 0, yhi = 0; // 2D only
    double desired = 0;
};

// Full description of one experiment run.
struct ExperimentConfig {
    std::string name;

    SpdeModel model;

    int dim = 1;
    double extent = 1.0;
    int points = 64;

    ActuatorKind actuation = ActuatorKind::GaussianDistributed;
    std::vector<std::vector<double>> centers;
    double actuator_sigma2 = 0.01;

    double kappa = 1e-3;
    std::vector<RegionSpec> regions;

    double horizon = 1.0; // T
    double dt = 0.01;

    int iterations = 1000; // K
    int rollouts = 50;     // R
    double learn_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    GradientMode gradient_mode = GradientMode::FullGraph;
    int proximal_steps = 0;
    NoiseChannel noise_channel = NoiseChannel::Field;

    Arch arch = Arch::Mlp;
    double init_scale = 1.0;

    std::uint64_t seed = 0;
    int checkpoint_interval = 100;

    enum class InitialCondition { Zero, NagumoSigmoid };
    InitialCondition initial_condition = InitialCondition::Zero;

    int steps() const;
    void validate() const;

    Grid grid() const { return make_grid(dim, extent, points); }
    ActuatorMap actuator_map() const;
    CostSpec cost_spec() const; // regions resolved against the grid
    Field initial_field() const;
    PolicyParams initial_policy() const; // seeded from `seed`
    TrainOptions train_options() const;
};

// Sectioned key = value config text.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string dump_config(const ExperimentConfig& config);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name);

} // namespace spde
