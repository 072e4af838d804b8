#include "spde/train.hpp"

#include <chrono>
#include <cmath>
#include <iostream>

namespace spde {

double state_cost(const Trajectory& traj, const CostSpec& spec) {
    if (!traj.finite) return std::numeric_limits<double>::infinity();
    double acc = 0;
    for (size_t t = 1; t < traj.states.size(); ++t) {
        const Eigen::VectorXd& v = traj.states[t].values;
        for (const auto& region : spec.regions)
            for (int node : region.nodes) {
                const double d = v[node] - region.desired;
                acc += d * d;
            }
    }
    return spec.kappa * acc;
}

Eigen::VectorXd importance_weights(const Eigen::VectorXd& jtilde, double rho) {
    double lo = std::numeric_limits<double>::infinity();
    for (int r = 0; r < jtilde.size(); ++r) lo = std::min(lo, jtilde[r]);
    if (std::isinf(lo))
        throw std::runtime_error("importance_weights: every augmented cost is infinite");
    Eigen::VectorXd w(jtilde.size());
    double total = 0;
    for (int r = 0; r < jtilde.size(); ++r) {
        w[r] = std::isinf(jtilde[r]) ? 0.0 : std::exp(-rho * (jtilde[r] - lo));
        total += w[r];
    }
    return w / total;
}

RolloutBatch make_batch(std::vector<Trajectory> trajectories, const CostSpec& cost,
                        double rho) {
    RolloutBatch b;
    b.rho = rho;
    const int R = static_cast<int>(trajectories.size());
    b.state_costs.resize(R);
    b.noise_terms.resize(R);
    b.policy_terms.resize(R);
    b.jtilde.resize(R);
    for (int r = 0; r < R; ++r) {
        const Trajectory& t = trajectories[r];
        b.state_costs[r] = state_cost(t, cost);
        b.noise_terms[r] = t.noise_term_sum();
        b.policy_terms[r] = t.policy_term_sum();
        b.jtilde[r] = augmented_cost(b.state_costs[r], b.noise_terms[r], b.policy_terms[r], rho);
    }
    b.weights = importance_weights(b.jtilde, rho);
    b.trajectories = std::move(trajectories);
    return b;
}

double loss(const RolloutBatch& batch, double rho) {
    const double sr = std::sqrt(rho);
    double acc = 0;
    for (int r = 0; r < batch.size(); ++r) {
        if (batch.weights[r] == 0) continue;
        acc += batch.weights[r] *
               (-sr * batch.noise_terms[r] - 0.5 * rho * batch.policy_terms[r]);
    }
    return acc;
}

BatchEval eval_batch(const PolicyParams& params, const RolloutBatch& batch,
                     const ActuatorMap& map, double rho) {
    const bool actuation_channel =
        batch.size() > 0 && batch.trajectories[0].channel == NoiseChannel::Actuation;
    BatchEval ev;
    const int R = batch.size();
    ev.controls.resize(R);
    ev.noise_terms.resize(R);
    ev.policy_terms.resize(R);
    ev.jtilde.resize(R);
    for (int r = 0; r < R; ++r) {
        const Trajectory& traj = batch.trajectories[r];
        if (!traj.finite) {
            ev.noise_terms[r] = 0;
            ev.policy_terms[r] = 0;
            ev.jtilde[r] = std::numeric_limits<double>::infinity();
            continue;
        }
        double N = 0, P = 0;
        ev.controls[r].resize(traj.steps());
        for (int t = 0; t < traj.steps(); ++t) {
            Eigen::VectorXd u = forward(params, traj.states[t]);
            N += u.dot(traj.noise_proj[t]);
            P += actuation_channel ? u.squaredNorm() : u.dot(map.gram * u);
            ev.controls[r][t] = std::move(u);
        }
        ev.noise_terms[r] = N;
        ev.policy_terms[r] = P * traj.dt;
        ev.jtilde[r] =
            augmented_cost(batch.state_costs[r], ev.noise_terms[r], ev.policy_terms[r], rho);
    }
    ev.weights = importance_weights(ev.jtilde, rho);
    const double sr = std::sqrt(rho);
    ev.loss = 0;
    for (int r = 0; r < R; ++r) {
        if (ev.weights[r] == 0) continue;
        ev.loss += ev.weights[r] * (-sr * ev.noise_terms[r] - 0.5 * rho * ev.policy_terms[r]);
    }
    return ev;
}

Eigen::VectorXd loss_gradient(const PolicyParams& params, const RolloutBatch& batch,
                              const ActuatorMap& map, double rho, GradientMode mode) {
    const BatchEval ev = eval_batch(params, batch, map, rho);
    const int R = batch.size();
    const double sr = std::sqrt(rho);
    const bool actuation_channel =
        batch.size() > 0 && batch.trajectories[0].channel == NoiseChannel::Actuation;

    // A_r = -sqrt(rho) N_r - (rho/2) P_r; differentiating the weights adds
    // the centered term -rho w_r (A_r - Abar) dJ~_r, which folds into a
    // per-rollout coefficient c_r on the direct path.
    Eigen::VectorXd a(R);
    double abar = 0;
    for (int r = 0; r < R; ++r) {
        a[r] = ev.weights[r] == 0
                   ? 0.0
                   : -sr * ev.noise_terms[r] - 0.5 * rho * ev.policy_terms[r];
        abar += ev.weights[r] * a[r];
    }
    Eigen::VectorXd c(R);
    for (int r = 0; r < R; ++r) {
        c[r] = mode == GradientMode::FullGraph
                   ? ev.weights[r] * (1.0 + a[r] - abar)
                   : ev.weights[r];
    }

    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.theta.size());
    GradientTape tape;
    for (int r = 0; r < R; ++r) {
        const Trajectory& traj = batch.trajectories[r];
        if (!traj.finite || c[r] == 0) continue;
        for (int t = 0; t < traj.steps(); ++t) {
            const Eigen::VectorXd& u = ev.controls[r][t];
            Eigen::VectorXd cot = -sr * c[r] * traj.noise_proj[t];
            if (actuation_channel)
                cot += -rho * c[r] * traj.dt * u;
            else
                cot += -rho * c[r] * traj.dt * (map.gram * u);
            forward(params, traj.states[t], &tape);
            backward(params, tape, cot, grad);
        }
    }
    if (!grad.allFinite()) throw std::runtime_error("loss gradient is non-finite");
    return grad;
}

Eigen::VectorXd proximal_gradient(const PolicyParams& params, const RolloutBatch& batch,
                                  const ActuatorMap& map, double rho) {
    const double sr = std::sqrt(rho);
    const bool actuation_channel =
        batch.size() > 0 && batch.trajectories[0].channel == NoiseChannel::Actuation;
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.theta.size());
    GradientTape tape;
    for (int r = 0; r < batch.size(); ++r) {
        const Trajectory& traj = batch.trajectories[r];
        const double w = batch.weights[r];
        if (!traj.finite || w == 0) continue;
        for (int t = 0; t < traj.steps(); ++t) {
            Eigen::VectorXd u = forward(params, traj.states[t], &tape);
            Eigen::VectorXd du = u - traj.controls[t];
            Eigen::VectorXd cot = -sr * w * traj.noise_proj[t];
            if (actuation_channel)
                cot += rho * w * traj.dt * du;
            else
                cot += rho * w * traj.dt * (map.gram * du);
            backward(params, tape, cot, grad);
        }
    }
    if (!grad.allFinite()) throw std::runtime_error("proximal gradient is non-finite");
    return grad;
}

double policy_inner_product_masked_sum(const PolicyParams& params, const Field& x,
                                       const ActuatorMap& map) {
    const Eigen::MatrixXd per_node = sparse_forward_pass(params, x.values); // nodes x N
    const Eigen::VectorXd projected =
        (per_node.array() * map.shapes.array()).rowwise().sum(); // m(x_j) . phi_j
    return projected.squaredNorm() * cell_measure(x.grid);
}

Rng rollout_rng(std::uint64_t seed, int iteration, int r) {
    // splitmix64 over the packed triple
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (1 + static_cast<std::uint64_t>(iteration)) +
                      0xBF58476D1CE4E5B9ull * (1 + static_cast<std::uint64_t>(r));
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return Rng(z);
}

TrainResult train(const SpdeModel& model, const ActuatorMap& map, const CostSpec& cost,
                  const Field& x0, PolicyParams params, const TrainOptions& opts) {
    OptimizerState optimizer =
        make_optimizer(params, opts.learn_rate, opts.beta1, opts.beta2, opts.adam_eps);
    TrainReport report;
    const auto start = std::chrono::steady_clock::now();
    for (int k = 1; k <= opts.iterations; ++k) {
        std::vector<Trajectory> trajectories;
        trajectories.reserve(opts.rollouts);
        for (int r = 0; r < opts.rollouts; ++r) {
            Rng rng = rollout_rng(opts.seed, k, r);
            trajectories.push_back(
                rollout(model, map, params, x0, opts.steps, opts.dt, rng, opts.channel));
        }

        TrainRecord rec;
        rec.iteration = k;
        try {
            RolloutBatch batch = make_batch(std::move(trajectories), cost, model.rho);
            rec.loss = loss(batch, model.rho);
            double mean_cost = 0;
            int finite_count = 0;
            for (int r = 0; r < batch.size(); ++r) {
                if (!std::isinf(batch.state_costs[r])) {
                    mean_cost += batch.state_costs[r];
                    ++finite_count;
                }
            }
            rec.mean_state_cost = finite_count ? mean_cost / finite_count : 0;
            rec.effective_sample_size = 1.0 / batch.weights.squaredNorm();
            if (rec.effective_sample_size < opts.ess_warn_fraction * opts.rollouts)
                std::cerr << "warning: iteration " << k << " effective sample size "
                          << rec.effective_sample_size << " below "
                          << opts.ess_warn_fraction * opts.rollouts << "\n";
            if (opts.proximal_steps > 0) {
                for (int it = 0; it < opts.proximal_steps; ++it) {
                    Eigen::VectorXd grad = proximal_gradient(params, batch, map, model.rho);
                    if (it == 0) rec.grad_norm = grad.norm();
                    adam_step(optimizer, params, grad);
                }
            } else {
                Eigen::VectorXd grad = loss_gradient(params, batch, map, model.rho, opts.mode);
                rec.grad_norm = grad.norm();
                adam_step(optimizer, params, grad);
            }
        } catch (const std::runtime_error& e) {
            report.aborted = true;
            report.abort_reason = e.what();
            break;
        }
        rec.wall_time_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        report.records.push_back(rec);
        if (opts.on_iteration) opts.on_iteration(k, params, rec);
    }
    return TrainResult{std::move(params), std::move(report)};
}

} // namespace spde
