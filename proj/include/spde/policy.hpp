#pragma once

#include "spde/grid.hpp"

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

namespace spde {

enum class Arch { Mlp, Cnn };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& s);

// One named tensor inside the flat parameter vector.
struct TensorSlot {
    std::string name;
    int rows = 0; // leading dimension (output channels for conv kernels)
    int cols = 0; // remaining dimensions flattened
    int offset = 0;

    int size() const { return rows * cols; }
};

// Policy network phi(X; Theta): H -> R^N.
//
// MLP: input J -> 64 -> 64 -> N, ReLU hidden, linear head (1D fields).
// CNN (2D fields, J x J input):
//   conv 4x4, 5 filters, stride 2, valid, ReLU
//   max-pool 2x2 stride 2
//   conv 2x2, 16 filters, stride 1, same (extra pad high side), ReLU
//   max-pool 2x2 stride 2
//   dense -> N, linear.
struct PolicyParams {
    Arch arch = Arch::Mlp;
    int input_points = 0; // J per axis
    int input_dim = 1;
    int outputs = 0; // N
    std::vector<TensorSlot> slots;
    Eigen::VectorXd theta;

    int input_size() const {
        return input_dim == 1 ? input_points : input_points * input_points;
    }
    const TensorSlot& slot(const std::string& name) const;
    Eigen::Map<const Eigen::MatrixXd> tensor(const TensorSlot& s) const {
        return {theta.data() + s.offset, s.rows, s.cols};
    }
};

// Derived CNN feature-map sizes for a given input extent.
struct CnnDims {
    int conv1_out = 0; // (J - 4) / 2 + 1
    int pool1_out = 0; // conv1_out / 2 (floor)
    int conv2_out = 0; // pool1_out (same padding, stride 1)
    int pool2_out = 0; // conv2_out / 2 (floor)
    int flat = 0;      // pool2_out^2 * 16
};
CnnDims cnn_dims(int J);

inline constexpr int kMlpHidden = 64;
inline constexpr int kConv1Filters = 5;
inline constexpr int kConv1Kernel = 4;
inline constexpr int kConv2Filters = 16;
inline constexpr int kConv2Kernel = 2;

enum class InitScheme { FanIn, Zero };

PolicyParams make_policy(Arch arch, int input_points, int input_dim, int outputs);
PolicyParams init_params(Arch arch, int input_points, int input_dim, int outputs,
                         std::mt19937_64& rng, InitScheme scheme = InitScheme::FanIn,
                         double gain = 1.0);

// Recorded forward activations, enough to run the reverse sweep.
struct GradientTape {
    Eigen::VectorXd input;
    // MLP
    Eigen::VectorXd h1, h2;
    // CNN (channel-major flat feature maps)
    Eigen::VectorXd conv1_act, pool1, conv2_act, pool2;
    std::vector<int> pool1_argmax, pool2_argmax;
};

Eigen::VectorXd forward(const PolicyParams& params, const Eigen::VectorXd& x,
                        GradientTape* tape = nullptr);
inline Eigen::VectorXd forward(const PolicyParams& params, const Field& x,
                               GradientTape* tape = nullptr) {
    return forward(params, x.values, tape);
}

// Accumulates d(output . cotangent)/d(theta) into grad, and returns the
// input cotangent if requested.
void backward(const PolicyParams& params, const GradientTape& tape,
              const Eigen::VectorXd& cotangent, Eigen::VectorXd& grad);

// phi(X(e_j); Theta) for every node j, where X(e_j) keeps only node j of x
// active. Row j of the result is the output for node j. Layer one is
// evaluated through its single active column (the Toeplitz-matrix view of
// the convolution); deeper layers run densely on the small feature maps.
Eigen::MatrixXd sparse_forward_pass(const PolicyParams& params, const Eigen::VectorXd& x);

// ADAM with bias correction.
struct OptimizerState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;
    double learn_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

OptimizerState make_optimizer(const PolicyParams& params, double learn_rate,
                              double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
void adam_step(OptimizerState& state, PolicyParams& params, const Eigen::VectorXd& grad);

// Checkpoint: plain-text shape manifest followed by the flat little-endian
// float64 parameter array.
void save_checkpoint(const PolicyParams& params, const std::string& path);
PolicyParams load_checkpoint(const std::string& path);

} // namespace spde
