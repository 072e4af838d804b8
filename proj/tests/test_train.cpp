#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spde/train.hpp"

#include <cmath>

using namespace spde;

namespace {

struct Setup {
    Grid grid;
    SpdeModel model;
    ActuatorMap map;
    Field x0;
    PolicyParams policy;
};

Setup heat_setup(int J, std::uint64_t seed, double init_scale = 1.0) {
    Setup s{make_grid(1, 1.0, J), {}, {}, {}, {}};
    s.model.kind = SpdeKind::Heat1dDirichlet;
    s.model.epsilon = 1.0;
    s.model.rho = 10.0;
    s.map = gaussian_actuator_map(s.grid, {{0.3}, {0.5}, {0.7}}, 0.01);
    s.x0 = make_field(s.grid);
    for (int j = 0; j < J; ++j)
        s.x0.values[j] = 0.5 * std::sin(M_PI * s.grid.coord(j));
    Rng rng(seed);
    s.policy = init_params(Arch::Mlp, J, 1, s.map.count(), rng, InitScheme::FanIn, init_scale);
    return s;
}

Setup heat2d_setup(int J, std::uint64_t seed, double init_scale = 1.0) {
    Setup s{make_grid(2, 0.25, J), {}, {}, {}, {}};
    s.model.kind = SpdeKind::Heat2dDirichlet;
    s.model.epsilon = 1.0;
    s.model.rho = 10.0;
    const double a = s.grid.extent;
    s.map = gaussian_actuator_map(s.grid, {{0.3 * a, 0.3 * a}, {0.7 * a, 0.7 * a}},
                                  0.025 * 0.025);
    s.x0 = make_field(s.grid);
    for (int r = 0; r < J; ++r)
        for (int c = 0; c < J; ++c)
            s.x0.values[s.grid.index(r, c)] = 0.5 *
                                              std::sin(M_PI * s.grid.coord(r) / a) *
                                              std::sin(M_PI * s.grid.coord(c) / a);
    Rng rng(seed);
    s.policy = init_params(Arch::Cnn, J, 2, s.map.count(), rng, InitScheme::FanIn, init_scale);
    return s;
}

CostSpec mid_cost(const Grid& g, double desired, double kappa) {
    CostSpec spec;
    spec.kappa = kappa;
    CostRegion region;
    region.desired = desired;
    for (int j = 0; j < g.node_count(); ++j) region.nodes.push_back(j);
    spec.regions.push_back(region);
    return spec;
}

} // namespace

TEST_CASE("rollout: shapes, determinism, recorded pairings") {
    Setup s = heat_setup(32, 1);
    const int T = 20;
    Rng r1 = rollout_rng(7, 1, 0), r2 = rollout_rng(7, 1, 0), r3 = rollout_rng(7, 1, 1);
    Trajectory a = rollout(s.model, s.map, s.policy, s.x0, T, 0.01, r1);
    Trajectory b = rollout(s.model, s.map, s.policy, s.x0, T, 0.01, r2);
    Trajectory c = rollout(s.model, s.map, s.policy, s.x0, T, 0.01, r3);

    CHECK(a.steps() == T);
    CHECK(a.states.size() == T + 1);
    CHECK(a.finite);
    for (int t = 0; t < T; ++t) {
        CHECK((a.states[t].values - b.states[t].values).lpNorm<Eigen::Infinity>() == 0.0);
        CHECK(a.noise_term[t] == b.noise_term[t]);
    }
    CHECK((a.states.back().values - c.states.back().values).lpNorm<Eigen::Infinity>() > 0.0);

    // recorded terms match their definitions
    for (int t = 0; t < T; ++t) {
        const Eigen::VectorXd& u = a.controls[t];
        CHECK((u - forward(s.policy, a.states[t])).lpNorm<Eigen::Infinity>() < 1e-14);
        CHECK(a.noise_term[t] == doctest::Approx(u.dot(a.noise_proj[t])).epsilon(1e-14));
        CHECK(a.policy_term[t] ==
              doctest::Approx(u.dot(s.map.gram * u)).epsilon(1e-12));

        // <Phi, dW> through the field-level pairing
        Field phi = control_field(s.map, u);
        NoiseIncrement w{s.grid, a.noise_xi[t], a.dt};
        CHECK(a.noise_term[t] == doctest::Approx(noise_pairing(phi, w)).epsilon(1e-12));
    }
}

TEST_CASE("rollout: actuation channel pairings") {
    Setup s = heat_setup(32, 2);
    Rng rng = rollout_rng(11, 1, 0);
    Trajectory a =
        rollout(s.model, s.map, s.policy, s.x0, 10, 0.01, rng, NoiseChannel::Actuation);
    CHECK(a.channel == NoiseChannel::Actuation);
    for (int t = 0; t < a.steps(); ++t) {
        CHECK(a.noise_proj[t].size() == s.map.count());
        CHECK(a.noise_term[t] ==
              doctest::Approx(a.controls[t].dot(a.noise_proj[t])).epsilon(1e-14));
        CHECK(a.policy_term[t] ==
              doctest::Approx(a.controls[t].squaredNorm()).epsilon(1e-14));
    }
}

TEST_CASE("rollout: trajectory-level Ito isometry on frozen controls") {
    Setup s = heat_setup(24, 3, 0.5);
    Rng rng = rollout_rng(21, 1, 0);
    const int T = 10;
    const double dt = 0.01;
    Trajectory base = rollout(s.model, s.map, s.policy, s.x0, T, dt, rng);

    // freeze the control fields, resample only the noise
    std::vector<Field> phi;
    double expected = 0;
    for (int t = 0; t < T; ++t) {
        phi.push_back(control_field(s.map, base.controls[t]));
        expected += dt * inner_product(phi.back(), phi.back());
    }

    const int samples = 20000;
    Rng noise_rng(99);
    double sum = 0, sq = 0;
    for (int i = 0; i < samples; ++i) {
        double n = 0;
        for (int t = 0; t < T; ++t) n += noise_pairing(phi[t], sample_noise(s.grid, dt, noise_rng));
        sum += n;
        sq += n * n;
    }
    const double var = sq / samples - (sum / samples) * (sum / samples);
    CHECK(var == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("rollout: blow-up is truncated and flagged") {
    const Grid g = make_grid(1, 1.0, 64);
    SpdeModel model;
    model.kind = SpdeKind::Burgers1dDirichlet;
    model.epsilon = 1e-6;
    model.rho = 10.0;
    model.sigma = 0.0;
    model.bc_left = 1.0;
    model.bc_right = 1.0;
    ActuatorMap map = gaussian_actuator_map(g, {{0.5}}, 0.01);
    PolicyParams policy = make_policy(Arch::Mlp, 64, 1, 1);
    Field x0 = make_field(g);
    for (int j = 0; j < g.points; ++j) x0.values[j] = 1e4 * std::sin(M_PI * g.coord(j));

    Rng rng(1);
    Trajectory traj = rollout(model, map, policy, x0, 50, 0.5, rng);
    CHECK(!traj.finite);
    CHECK(traj.steps() < 50);
    CHECK(traj.noise_term.size() == traj.steps());
    CHECK(traj.states.size() == traj.steps() + 1);

    CostSpec cost = mid_cost(g, 0.0, 1.0);
    CHECK(std::isinf(state_cost(traj, cost)));
}

TEST_CASE("state_cost: hand arithmetic") {
    const Grid g = make_grid(1, 1.0, 5);
    Trajectory traj;
    traj.dt = 0.1;
    traj.states.push_back(make_field(g, Eigen::VectorXd::Constant(5, 9.0))); // X_0 ignored
    traj.states.push_back(make_field(g, (Eigen::VectorXd(5) << 1, 2, 3, 4, 5).finished()));
    traj.states.push_back(make_field(g, (Eigen::VectorXd(5) << 5, 4, 3, 2, 1).finished()));
    traj.controls.resize(2);

    CostSpec spec;
    spec.kappa = 0.5;
    spec.regions.push_back({{1, 3}, 2.0});
    // t=1: (2-2)^2 + (4-2)^2 = 4; t=2: (4-2)^2 + (2-2)^2 = 4
    CHECK(state_cost(traj, spec) == doctest::Approx(0.5 * 8.0).epsilon(1e-14));

    spec.regions.push_back({{0}, 1.0});
    // adds t=1: (1-1)^2 = 0; t=2: (5-1)^2 = 16
    CHECK(state_cost(traj, spec) == doctest::Approx(0.5 * 24.0).epsilon(1e-14));
}

TEST_CASE("augmented_cost arithmetic") {
    CHECK(augmented_cost(1.0, 2.0, 3.0, 4.0) == doctest::Approx(1.0 + 1.0 + 1.5).epsilon(1e-14));
    CHECK(augmented_cost(0.0, -3.0, 0.5, 9.0) == doctest::Approx(-1.0 + 0.25).epsilon(1e-14));
    CHECK(std::isinf(augmented_cost(std::numeric_limits<double>::infinity(), 0, 0, 1.0)));
}

TEST_CASE("importance_weights: closed forms and invariances") {
    // rho = 1, jtilde = [0, ln 3] -> [3/4, 1/4]
    Eigen::Vector2d j(0.0, std::log(3.0));
    Eigen::VectorXd w = importance_weights(j, 1.0);
    CHECK(w[0] == doctest::Approx(0.75).epsilon(1e-14));
    CHECK(w[1] == doctest::Approx(0.25).epsilon(1e-14));

    // equal costs -> uniform
    Eigen::VectorXd eq = importance_weights(Eigen::VectorXd::Constant(7, 42.0), 3.0);
    CHECK((eq.array() - 1.0 / 7).abs().maxCoeff() < 1e-14);

    // shift invariance
    Rng rng(5);
    std::normal_distribution<double> n01;
    Eigen::VectorXd costs(9);
    for (auto& v : costs.reshaped()) v = n01(rng);
    Eigen::VectorXd w1 = importance_weights(costs, 2.5);
    Eigen::VectorXd w2 = importance_weights((costs.array() + 17.0).matrix(), 2.5);
    CHECK((w1 - w2).lpNorm<Eigen::Infinity>() < 1e-13);
    CHECK(w1.sum() == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(w1.minCoeff() >= 0.0);

    // temperature limits
    Eigen::VectorXd hot = importance_weights(costs, 1e-12);
    CHECK((hot.array() - 1.0 / 9).abs().maxCoeff() < 1e-9);
    Eigen::VectorXd cold = importance_weights(costs, 1e6);
    int argmin;
    costs.minCoeff(&argmin);
    CHECK(cold[argmin] == doctest::Approx(1.0).epsilon(1e-9));

    // infinities get zero weight; all-infinite throws
    Eigen::Vector3d withinf(1.0, std::numeric_limits<double>::infinity(), 1.0);
    Eigen::VectorXd wi = importance_weights(withinf, 1.0);
    CHECK(wi[1] == 0.0);
    CHECK(wi[0] == doctest::Approx(0.5).epsilon(1e-14));
    Eigen::Vector2d allinf(std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity());
    CHECK_THROWS_AS(importance_weights(allinf, 1.0), std::runtime_error);
}

TEST_CASE("loss: three-rollout spreadsheet oracle") {
    const double rho = 4.0;
    RolloutBatch b;
    b.rho = rho;
    b.trajectories.resize(3);
    b.state_costs = (Eigen::VectorXd(3) << 0.3, 0.1, 0.7).finished();
    b.noise_terms = (Eigen::VectorXd(3) << 0.2, -0.1, 0.05).finished();
    b.policy_terms = (Eigen::VectorXd(3) << 0.4, 0.6, 0.2).finished();
    b.jtilde.resize(3);
    for (int r = 0; r < 3; ++r)
        b.jtilde[r] = b.state_costs[r] + b.noise_terms[r] / 2.0 + b.policy_terms[r] / 2.0;
    b.weights = importance_weights(b.jtilde, rho);

    // by hand: jtilde = [0.6, 0.35, 0.825], shifted exp(-4*d)
    const double e0 = std::exp(-4 * 0.25), e1 = 1.0, e2 = std::exp(-4 * 0.475);
    const double z = e0 + e1 + e2;
    double expected = 0;
    const double a0 = -2 * 0.2 - 2 * 0.4, a1 = -2 * -0.1 - 2 * 0.6, a2 = -2 * 0.05 - 2 * 0.2;
    expected = (e0 * a0 + e1 * a1 + e2 * a2) / z;
    CHECK(b.weights[1] == doctest::Approx(e1 / z).epsilon(1e-13));
    CHECK(loss(b, rho) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("make_batch and eval_batch agree at the sampling parameters") {
    Setup s = heat_setup(24, 4, 0.5);
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    std::vector<Trajectory> trajs;
    for (int r = 0; r < 5; ++r) {
        Rng rng = rollout_rng(31, 1, r);
        trajs.push_back(rollout(s.model, s.map, s.policy, s.x0, 15, 0.01, rng));
    }
    RolloutBatch batch = make_batch(std::move(trajs), cost, s.model.rho);
    BatchEval ev = eval_batch(s.policy, batch, s.map, s.model.rho);

    CHECK((ev.noise_terms - batch.noise_terms).lpNorm<Eigen::Infinity>() < 1e-11);
    CHECK((ev.policy_terms - batch.policy_terms).lpNorm<Eigen::Infinity>() < 1e-11);
    CHECK((ev.weights - batch.weights).lpNorm<Eigen::Infinity>() < 1e-11);
    CHECK(ev.loss == doctest::Approx(loss(batch, s.model.rho)).epsilon(1e-11));
}

TEST_CASE("Girsanov exponential: exactly one for the zero policy") {
    Setup s = heat_setup(32, 5);
    s.policy = make_policy(Arch::Mlp, 32, 1, s.map.count()); // zero parameters
    for (NoiseChannel ch : {NoiseChannel::Field, NoiseChannel::Actuation}) {
        for (int r = 0; r < 5; ++r) {
            Rng rng = rollout_rng(41, 1, r);
            Trajectory traj = rollout(s.model, s.map, s.policy, s.x0, 20, 0.01, rng, ch);
            const double rho = s.model.rho;
            const double log_g = -std::sqrt(rho) * traj.noise_term_sum() -
                                 0.5 * rho * traj.policy_term_sum();
            CHECK(log_g == 0.0);
        }
    }
}

TEST_CASE("Girsanov exponential: unit mean for a nonzero policy (small run)") {
    Setup s = heat_setup(16, 6, 0.3);
    const double rho = s.model.rho;
    const int samples = 4000;
    double sum = 0, sq = 0;
    for (int i = 0; i < samples; ++i) {
        Rng rng = rollout_rng(51, 1, i);
        Trajectory traj = rollout(s.model, s.map, s.policy, s.x0, 10, 0.01, rng);
        const double g = std::exp(-std::sqrt(rho) * traj.noise_term_sum() -
                                  0.5 * rho * traj.policy_term_sum());
        sum += g;
        sq += g * g;
    }
    const double mean = sum / samples;
    const double se = std::sqrt((sq / samples - mean * mean) / samples);
    CHECK(std::abs(mean - 1.0) < 4 * se);
}

TEST_CASE("loss_gradient matches finite differences (MLP, both modes)") {
    Setup s = heat_setup(16, 8, 0.5);
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    std::vector<Trajectory> trajs;
    for (int r = 0; r < 3; ++r) {
        Rng rng = rollout_rng(61, 1, r);
        trajs.push_back(rollout(s.model, s.map, s.policy, s.x0, 5, 0.01, rng));
    }
    RolloutBatch batch = make_batch(std::move(trajs), cost, s.model.rho);

    for (GradientMode mode : {GradientMode::FullGraph, GradientMode::DetachedWeights}) {
        Eigen::VectorXd grad = loss_gradient(s.policy, batch, s.map, s.model.rho, mode);
        Rng pick_rng(71);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(s.policy.theta.size()) - 1);
        const double h = 1e-6;
        int checked = 0;
        while (checked < 50) {
            const int i = pick(pick_rng);
            PolicyParams plus = s.policy, minus = s.policy;
            plus.theta[i] += h;
            minus.theta[i] -= h;
            double fp, fm;
            if (mode == GradientMode::FullGraph) {
                fp = eval_batch(plus, batch, s.map, s.model.rho).loss;
                fm = eval_batch(minus, batch, s.map, s.model.rho).loss;
            } else {
                // weights frozen at the base parameters
                BatchEval evp = eval_batch(plus, batch, s.map, s.model.rho);
                BatchEval evm = eval_batch(minus, batch, s.map, s.model.rho);
                const Eigen::VectorXd w = batch.weights;
                fp = fm = 0;
                for (int r = 0; r < batch.size(); ++r) {
                    fp += w[r] * (-std::sqrt(s.model.rho) * evp.noise_terms[r] -
                                  0.5 * s.model.rho * evp.policy_terms[r]);
                    fm += w[r] * (-std::sqrt(s.model.rho) * evm.noise_terms[r] -
                                  0.5 * s.model.rho * evm.policy_terms[r]);
                }
            }
            const double fd = (fp - fm) / (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-10});
            CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
            ++checked;
        }
    }
}

TEST_CASE("loss_gradient matches finite differences (CNN)") {
    Setup s = heat2d_setup(16, 9, 0.5);
    // jitter all parameters (including the zero-initialized biases) so no
    // ReLU pre-activation sits exactly on its kink
    {
        Rng jitter(1234);
        std::normal_distribution<double> n01;
        for (auto& v : s.policy.theta.reshaped()) v += 0.01 * n01(jitter);
    }
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    std::vector<Trajectory> trajs;
    for (int r = 0; r < 2; ++r) {
        Rng rng = rollout_rng(81, 1, r);
        trajs.push_back(rollout(s.model, s.map, s.policy, s.x0, 3, 0.002, rng));
    }
    RolloutBatch batch = make_batch(std::move(trajs), cost, s.model.rho);
    Eigen::VectorXd grad =
        loss_gradient(s.policy, batch, s.map, s.model.rho, GradientMode::FullGraph);

    Rng pick_rng(91);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(s.policy.theta.size()) - 1);
    const double h = 1e-6;
    for (int rep = 0; rep < 50; ++rep) {
        const int i = pick(pick_rng);
        PolicyParams plus = s.policy, minus = s.policy;
        plus.theta[i] += h;
        minus.theta[i] -= h;
        const double fd = (eval_batch(plus, batch, s.map, s.model.rho).loss -
                           eval_batch(minus, batch, s.map, s.model.rho).loss) /
                          (2 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-10});
        CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
    }
}

namespace {

// The surrogate the proximal update descends, written out directly.
double proximal_value(const PolicyParams& params, const RolloutBatch& batch,
                      const ActuatorMap& map, double rho) {
    const double sr = std::sqrt(rho);
    double acc = 0;
    for (int r = 0; r < batch.size(); ++r) {
        const Trajectory& traj = batch.trajectories[r];
        if (!traj.finite || batch.weights[r] == 0) continue;
        for (int t = 0; t < traj.steps(); ++t) {
            Eigen::VectorXd du = forward(params, traj.states[t]) - traj.controls[t];
            acc += batch.weights[r] * (-sr * du.dot(traj.noise_proj[t]) +
                                       0.5 * rho * traj.dt * du.dot(map.gram * du));
        }
    }
    return acc;
}

} // namespace

TEST_CASE("proximal_gradient matches finite differences of its surrogate") {
    Setup s = heat_setup(16, 8, 0.5);
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    std::vector<Trajectory> trajs;
    for (int r = 0; r < 3; ++r) {
        Rng rng = rollout_rng(62, 1, r);
        trajs.push_back(rollout(s.model, s.map, s.policy, s.x0, 5, 0.01, rng));
    }
    RolloutBatch batch = make_batch(std::move(trajs), cost, s.model.rho);

    // away from the behavior parameters the quadratic pull is active
    PolicyParams shifted = s.policy;
    Rng jitter(77);
    std::normal_distribution<double> gauss(0.0, 0.02);
    for (int i = 0; i < shifted.theta.size(); ++i) shifted.theta[i] += gauss(jitter);

    for (const PolicyParams& at : {s.policy, shifted}) {
        Eigen::VectorXd grad = proximal_gradient(at, batch, s.map, s.model.rho);
        Rng pick_rng(72);
        std::uniform_int_distribution<int> pick(0, static_cast<int>(at.theta.size()) - 1);
        const double h = 1e-6;
        for (int checked = 0; checked < 40; ++checked) {
            const int i = pick(pick_rng);
            PolicyParams plus = at, minus = at;
            plus.theta[i] += h;
            minus.theta[i] -= h;
            const double fd = (proximal_value(plus, batch, s.map, s.model.rho) -
                               proximal_value(minus, batch, s.map, s.model.rho)) /
                              (2 * h);
            const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-10});
            CHECK(std::abs(fd - grad[i]) / denom < 1e-4);
        }
    }
}

TEST_CASE("proximal_gradient at the behavior parameters is the weighted noise term") {
    Setup s = heat_setup(16, 9, 0.5);
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    std::vector<Trajectory> trajs;
    for (int r = 0; r < 4; ++r) {
        Rng rng = rollout_rng(63, 1, r);
        trajs.push_back(rollout(s.model, s.map, s.policy, s.x0, 6, 0.01, rng));
    }
    RolloutBatch batch = make_batch(std::move(trajs), cost, s.model.rho);

    // dt = 0 switches off the quadratic pull, leaving the weighted noise
    // term; zeroed noise pairings leave only the quadratic pull, which must
    // vanish when the parameters equal the behavior parameters (du = 0).
    RolloutBatch no_quad = batch;
    for (auto& t : no_quad.trajectories) t.dt = 0;
    RolloutBatch no_noise = batch;
    for (auto& t : no_noise.trajectories)
        for (auto& b : t.noise_proj) b.setZero();

    Eigen::VectorXd got = proximal_gradient(s.policy, batch, s.map, s.model.rho);
    Eigen::VectorXd noise_part = proximal_gradient(s.policy, no_quad, s.map, s.model.rho);
    Eigen::VectorXd quad_part = proximal_gradient(s.policy, no_noise, s.map, s.model.rho);
    CHECK(quad_part.lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK((got - noise_part).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(noise_part.norm() > 0);
}

TEST_CASE("train: proximal update is deterministic and leaves a record per iteration") {
    Setup s = heat_setup(16, 10, 0.5);
    CostSpec cost = mid_cost(s.grid, 0.5, 1e-3);
    TrainOptions opts;
    opts.iterations = 4;
    opts.rollouts = 4;
    opts.steps = 8;
    opts.dt = 0.01;
    opts.learn_rate = 1e-2;
    opts.proximal_steps = 3;
    opts.seed = 55;

    TrainResult a = train(s.model, s.map, cost, s.x0, s.policy, opts);
    TrainResult b = train(s.model, s.map, cost, s.x0, s.policy, opts);
    REQUIRE(!a.report.aborted);
    REQUIRE(a.report.records.size() == 4);
    CHECK(a.params.theta == b.params.theta);
    for (const TrainRecord& rec : a.report.records) {
        CHECK(std::isfinite(rec.loss));
        CHECK(rec.grad_norm > 0);
    }
    // the proximal inner loop must actually move the parameters
    CHECK((a.params.theta - s.policy.theta).norm() > 0);
}

TEST_CASE("gradient modes coincide for a single rollout") {
    Setup s = heat_setup(16, 10, 0.5);
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    std::vector<Trajectory> trajs;
    Rng rng = rollout_rng(95, 1, 0);
    trajs.push_back(rollout(s.model, s.map, s.policy, s.x0, 5, 0.01, rng));
    RolloutBatch batch = make_batch(std::move(trajs), cost, s.model.rho);

    Eigen::VectorXd full =
        loss_gradient(s.policy, batch, s.map, s.model.rho, GradientMode::FullGraph);
    Eigen::VectorXd det =
        loss_gradient(s.policy, batch, s.map, s.model.rho, GradientMode::DetachedWeights);
    CHECK((full - det).lpNorm<Eigen::Infinity>() < 1e-12 * (1 + det.lpNorm<Eigen::Infinity>()));
}

TEST_CASE("masked-sum policy inner product matches its definition") {
    Setup s = heat_setup(24, 12);
    Field x = s.x0;
    const double got = policy_inner_product_masked_sum(s.policy, x, s.map);

    double expected = 0;
    for (int j = 0; j < s.grid.node_count(); ++j) {
        Eigen::VectorXd masked = Eigen::VectorXd::Zero(s.grid.node_count());
        masked[j] = x.values[j];
        const Eigen::VectorXd phi = forward(s.policy, masked);
        const double m_dot_phi = s.map.shapes.row(j).dot(phi);
        expected += m_dot_phi * m_dot_phi;
    }
    expected *= cell_measure(s.grid);
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));

    PolicyParams zero = make_policy(Arch::Mlp, 24, 1, s.map.count());
    CHECK(policy_inner_product_masked_sum(zero, x, s.map) == 0.0);
}

TEST_CASE("rollout_rng: reproducible and pairwise distinct") {
    Rng a = rollout_rng(1, 2, 3), b = rollout_rng(1, 2, 3);
    CHECK(a() == b());
    CHECK(rollout_rng(1, 2, 3)() != rollout_rng(1, 2, 4)());
    CHECK(rollout_rng(1, 2, 3)() != rollout_rng(1, 3, 3)());
    CHECK(rollout_rng(1, 2, 3)() != rollout_rng(2, 2, 3)());
}

TEST_CASE("train: deterministic smoke run improves the recorded loss path") {
    Setup s = heat_setup(16, 14, 0.3);
    CostSpec cost = mid_cost(s.grid, 0.0, 1e-3);
    TrainOptions opts;
    opts.iterations = 5;
    opts.rollouts = 8;
    opts.steps = 10;
    opts.dt = 0.01;
    opts.learn_rate = 1e-3;
    opts.seed = 7;

    int callbacks = 0;
    opts.on_iteration = [&](int k, const PolicyParams&, const TrainRecord& rec) {
        ++callbacks;
        CHECK(rec.iteration == k);
    };
    TrainResult r1 = train(s.model, s.map, cost, s.x0, s.policy, opts);
    CHECK(!r1.report.aborted);
    CHECK(r1.report.records.size() == 5);
    CHECK(callbacks == 5);
    for (const auto& rec : r1.report.records) {
        CHECK(std::isfinite(rec.loss));
        CHECK(rec.effective_sample_size > 0.0);
        CHECK(rec.effective_sample_size <= 8.0 + 1e-9);
        CHECK(rec.grad_norm >= 0.0);
    }

    opts.on_iteration = nullptr;
    TrainResult r2 = train(s.model, s.map, cost, s.x0, s.policy, opts);
    CHECK((r1.params.theta - r2.params.theta).lpNorm<Eigen::Infinity>() == 0.0);
    for (size_t k = 0; k < r1.report.records.size(); ++k)
        CHECK(r1.report.records[k].loss == r2.report.records[k].loss);
}
