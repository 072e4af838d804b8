#include "spde/rollout.hpp"

namespace spde {

namespace {

Field advance(const SpdeModel& model, const Field& x, const Field& phi,
              const NoiseIncrement& w) {
    switch (model.kind) {
        case SpdeKind::Heat1dDirichlet: return step_heat_1d(x, phi, w, model);
        case SpdeKind::Heat2dDirichlet: return step_heat_2d(x, phi, w, model);
        case SpdeKind::Burgers1dDirichlet: return step_burgers_1d(x, phi, w, model);
        case SpdeKind::Nagumo1dNeumann: return step_nagumo_1d(x, phi, w, model);
        case SpdeKind::Heat1dBoundary: break; // handled by the caller
    }
    throw std::logic_error("advance: unsupported model kind");
}

} // namespace

Trajectory rollout(const SpdeModel& model, const ActuatorMap& map,
                   const PolicyParams& policy, const Field& x0, int steps, double dt,
                   Rng& rng, NoiseChannel channel) {
    if (steps < 1) throw std::invalid_argument("rollout needs at least one step");
    if (!x0.grid.same_as(map.grid)) throw std::invalid_argument("rollout: grid mismatch");
    if (policy.outputs != map.count())
        throw std::invalid_argument("rollout: policy outputs vs actuator count mismatch");
    model.validate();

    const Grid& g = x0.grid;
    const double amp = model.noise_amplitude();
    const bool boundary = model.kind == SpdeKind::Heat1dBoundary;
    const double proj_scale = std::sqrt(dt * cell_measure(g));
    std::normal_distribution<double> n01(0.0, 1.0);

    Trajectory traj;
    traj.dt = dt;
    traj.channel = channel;
    traj.states.reserve(steps + 1);
    traj.states.push_back(x0);
    traj.noise_term.resize(steps);
    traj.policy_term.resize(steps);

    for (int t = 0; t < steps; ++t) {
        const Field& x = traj.states.back();
        const Eigen::VectorXd u = forward(policy, x);

        Eigen::VectorXd xi;
        Eigen::VectorXd proj;
        NoiseIncrement w = zero_noise(g, dt);
        if (channel == NoiseChannel::Actuation) {
            xi.resize(map.count());
            for (int l = 0; l < xi.size(); ++l) xi[l] = amp == 0 ? 0.0 : n01(rng);
            // channel G = m: field increment m(x) xi sqrt(dt); pairings in R^N
            w.xi = map.shapes * xi * std::sqrt(cell_measure(g));
            proj = xi * std::sqrt(dt);
            traj.policy_term[t] = u.squaredNorm();
        } else {
            xi.resize(g.node_count());
            for (int l = 0; l < xi.size(); ++l) xi[l] = amp == 0 ? 0.0 : n01(rng);
            w.xi = xi;
            proj = map.shapes.transpose() * xi * proj_scale;
            traj.policy_term[t] = u.dot(map.gram * u);
        }
        traj.noise_term[t] = u.dot(proj);

        Field next;
        if (boundary) {
            const Eigen::Vector2d bxi = channel == NoiseChannel::Actuation
                                            ? Eigen::Vector2d(xi[0], xi[1])
                                            : Eigen::Vector2d(xi[0], xi[g.node_count() - 1]);
            next = step_heat_1d_boundary(x, Eigen::Vector2d(u[0], u[1]), bxi, dt, model);
        } else {
            next = advance(model, x, control_field(map, u), w);
        }

        traj.controls.push_back(u);
        traj.noise_xi.push_back(std::move(xi));
        traj.noise_proj.push_back(std::move(proj));
        if (!next.values.allFinite()) {
            traj.finite = false;
            traj.noise_term.conservativeResize(t + 1);
            traj.policy_term.conservativeResize(t + 1);
            traj.states.push_back(std::move(next));
            break;
        }
        traj.states.push_back(std::move(next));
    }
    return traj;
}

} // namespace spde
