#pragma once

#include "spde/rollout.hpp"

#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace spde {

// Quadratic tracking cost: J = kappa * sum_t sum_{nodes in regions}
// (X_t - desired)^2, summed over steps t = 1..T.
struct CostRegion {
    std::vector<int> nodes;
    double desired = 0;
};

struct CostSpec {
    std::vector<CostRegion> regions;
    double kappa = 1e-3;
};

double state_cost(const Trajectory& traj, const CostSpec& spec);

// J~ = J + N/sqrt(rho) + P/2 with N the summed noise inner product and
// P the time-integrated policy inner product.
inline double augmented_cost(double J, double N, double P, double rho) {
    if (std::isinf(J)) return std::numeric_limits<double>::infinity();
    return J + N / std::sqrt(rho) + P / 2.0;
}

// Normalized softmin weights exp(-rho (J~ - min J~)) / sum(...). Infinite
// entries get weight zero; throws if every entry is infinite.
Eigen::VectorXd importance_weights(const Eigen::VectorXd& jtilde, double rho);

// R on-policy trajectories with their per-rollout scalars.
struct RolloutBatch {
    std::vector<Trajectory> trajectories;
    Eigen::VectorXd state_costs;  // J_r
    Eigen::VectorXd noise_terms;  // N_r
    Eigen::VectorXd policy_terms; // P_r
    Eigen::VectorXd jtilde;
    Eigen::VectorXd weights;
    double rho = 0;

    int size() const { return static_cast<int>(trajectories.size()); }
};

RolloutBatch make_batch(std::vector<Trajectory> trajectories, const CostSpec& cost,
                        double rho);

// L = sum_r w_r ( -sqrt(rho) N_r - (rho/2) P_r ).
double loss(const RolloutBatch& batch, double rho);

enum class GradientMode { FullGraph, DetachedWeights };

// Alternate per-node evaluation of the policy inner product:
//   sum_j phi(X(e_j))^T m(x_j) m(x_j)^T phi(X(e_j)) dx^d
// via sparse_forward_pass. For a nonlinear phi this differs from the
// default u^T gram u with u = phi(X); the default is what the
// change-of-measure identities assume, so this path is evaluation-only.
double policy_inner_product_masked_sum(const PolicyParams& params, const Field& x,
                                       const ActuatorMap& map);

// Recomputation of the batch scalars and loss under (possibly different)
// parameters, with trajectory states and noise frozen as data. This is the
// function the gradient differentiates and the finite-difference oracle
// probes.
struct BatchEval {
    std::vector<std::vector<Eigen::VectorXd>> controls; // [r][t]
    Eigen::VectorXd noise_terms;
    Eigen::VectorXd policy_terms;
    Eigen::VectorXd jtilde;
    Eigen::VectorXd weights;
    double loss = 0;
};

BatchEval eval_batch(const PolicyParams& params, const RolloutBatch& batch,
                     const ActuatorMap& map, double rho);

// Reverse-mode gradient of the loss with respect to theta. In FullGraph
// mode the importance weights' dependence on theta (through J~) is
// differentiated; in DetachedWeights mode they are constants.
Eigen::VectorXd loss_gradient(const PolicyParams& params, const RolloutBatch& batch,
                              const ActuatorMap& map, double rho, GradientMode mode);

// Gradient of the proximal surrogate
//   sum_r w_r sum_t [ -sqrt(rho) du_t . b_t + (rho dt / 2) |du_t|^2_gram ],
//   du_t = phi(X_t; theta) - u_t(recorded),
// with weights and trajectories frozen. At the behavior parameters this
// equals the noise term of the detached-weights gradient; the quadratic
// term penalizes deviation from the sampled controls instead of rewarding
// raw control energy, which keeps the feedback gain bounded when the
// weights degenerate onto a single rollout.
Eigen::VectorXd proximal_gradient(const PolicyParams& params, const RolloutBatch& batch,
                                  const ActuatorMap& map, double rho);

struct TrainRecord {
    int iteration = 0;
    double loss = 0;
    double mean_state_cost = 0;
    double effective_sample_size = 0;
    double grad_norm = 0;
    double wall_time_s = 0;
};

struct TrainReport {
    std::vector<TrainRecord> records;
    bool aborted = false;
    std::string abort_reason;
};

struct TrainOptions {
    int iterations = 1;    // K
    int rollouts = 1;      // R
    int steps = 1;         // T / dt
    double dt = 0.01;
    double learn_rate = 1e-2;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    GradientMode mode = GradientMode::FullGraph;
    // 0: one Adam step on loss_gradient per batch. >0: that many Adam steps
    // on the proximal surrogate per batch (the stable update; see
    // proximal_gradient).
    int proximal_steps = 0;
    NoiseChannel channel = NoiseChannel::Field;
    std::uint64_t seed = 0;
    double ess_warn_fraction = 0.1;
    // invoked after each iteration with the current parameters
    std::function<void(int, const PolicyParams&, const TrainRecord&)> on_iteration;
};

// Per-rollout RNG seeding: reproducible and independent across (iter, r).
Rng rollout_rng(std::uint64_t seed, int iteration, int r);

struct TrainResult {
    PolicyParams params;
    TrainReport report;
};

TrainResult train(const SpdeModel& model, const ActuatorMap& map, const CostSpec& cost,
                  const Field& x0, PolicyParams params, const TrainOptions& opts);

} // namespace spde
