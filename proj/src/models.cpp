#include "spde/models.hpp"

#include "spde/linsolve.hpp"

namespace spde {

std::string to_string(SpdeKind kind) {
    switch (kind) {
        case SpdeKind::Heat1dDirichlet: return "heat1d-dirichlet";
        case SpdeKind::Heat2dDirichlet: return "heat2d-dirichlet";
        case SpdeKind::Burgers1dDirichlet: return "burgers1d-dirichlet";
        case SpdeKind::Nagumo1dNeumann: return "nagumo1d-neumann";
        case SpdeKind::Heat1dBoundary: return "heat1d-boundary";
    }
    throw std::logic_error("unknown SpdeKind");
}

SpdeKind spde_kind_from_string(const std::string& s) {
    if (s == "heat1d-dirichlet") return SpdeKind::Heat1dDirichlet;
    if (s == "heat2d-dirichlet") return SpdeKind::Heat2dDirichlet;
    if (s == "burgers1d-dirichlet") return SpdeKind::Burgers1dDirichlet;
    if (s == "nagumo1d-neumann") return SpdeKind::Nagumo1dNeumann;
    if (s == "heat1d-boundary") return SpdeKind::Heat1dBoundary;
    throw std::invalid_argument("unknown SPDE kind: " + s);
}

namespace {

// (I - eps*dt*L) on the J-2 interior nodes of a 1D Dirichlet grid.
TridiagFactor dirichlet_factor(const Grid& g, double r) {
    const int n = g.points - 2;
    Eigen::VectorXd sub = Eigen::VectorXd::Constant(n - 1, -r);
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 1 + 2 * r);
    return TridiagFactor(sub, diag, sub);
}

// (I - eps*dt*L_N) on all J nodes with reflected-ghost Neumann ends.
TridiagFactor neumann_factor(const Grid& g, double r) {
    const int n = g.points;
    Eigen::VectorXd sub = Eigen::VectorXd::Constant(n - 1, -r);
    Eigen::VectorXd super = Eigen::VectorXd::Constant(n - 1, -r);
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 1 + 2 * r);
    sub[n - 2] = -2 * r;
    super[0] = -2 * r;
    return TridiagFactor(sub, diag, super);
}

Field solve_dirichlet_1d(const Grid& g, const Eigen::VectorXd& rhs_interior, double r,
                         double bc_left, double bc_right) {
    const int n = g.points - 2;
    Eigen::VectorXd rhs = rhs_interior;
    rhs[0] += r * bc_left;
    rhs[n - 1] += r * bc_right;
    Field out = make_field(g);
    out.values.segment(1, n) = dirichlet_factor(g, r).solve(rhs);
    out.values[0] = bc_left;
    out.values[g.points - 1] = bc_right;
    return out;
}

void check_step_inputs(const Field& x, const Field& u_field, const NoiseIncrement& w,
                       const SpdeModel& model, SpdeKind expected) {
    model.validate();
    if (model.kind != expected) throw std::invalid_argument("stepper/model kind mismatch");
    if (!x.grid.same_as(u_field.grid) || !x.grid.same_as(w.grid))
        throw std::invalid_argument("stepper: grid mismatch");
    if (w.dt <= 0) throw std::invalid_argument("stepper: dt must be positive");
}

} // namespace

Field step_heat_1d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                   const SpdeModel& model) {
    check_step_inputs(x, u_field, w, model, SpdeKind::Heat1dDirichlet);
    const Grid& g = x.grid;
    const double dt = w.dt;
    const double r = model.epsilon * dt / (g.dx * g.dx);
    const int n = g.points - 2;
    Eigen::VectorXd rhs = x.values.segment(1, n) + dt * u_field.values.segment(1, n) +
                          model.noise_amplitude() * w.pointwise().segment(1, n);
    return solve_dirichlet_1d(g, rhs, r, model.bc_left, model.bc_right);
}

Field step_burgers_1d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                      const SpdeModel& model) {
    check_step_inputs(x, u_field, w, model, SpdeKind::Burgers1dDirichlet);
    const Grid& g = x.grid;
    const double dt = w.dt;
    const double r = model.epsilon * dt / (g.dx * g.dx);
    const int n = g.points - 2;
    // advection x * D_x x at the current time, central first difference
    Eigen::VectorXd adv(n);
    for (int j = 1; j <= n; ++j)
        adv[j - 1] = x.values[j] * (x.values[j + 1] - x.values[j - 1]) / (2 * g.dx);
    Eigen::VectorXd rhs = x.values.segment(1, n) - dt * adv +
                          dt * u_field.values.segment(1, n) +
                          model.noise_amplitude() * w.pointwise().segment(1, n);
    return solve_dirichlet_1d(g, rhs, r, model.bc_left, model.bc_right);
}

Field step_nagumo_1d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                     const SpdeModel& model) {
    check_step_inputs(x, u_field, w, model, SpdeKind::Nagumo1dNeumann);
    const Grid& g = x.grid;
    const double dt = w.dt;
    const double r = model.epsilon * dt / (g.dx * g.dx);
    const Eigen::ArrayXd v = x.values.array();
    const Eigen::VectorXd reaction = (v * (1.0 - v) * (v - model.alpha)).matrix();
    Eigen::VectorXd rhs = x.values + dt * reaction + dt * u_field.values +
                          model.noise_amplitude() * w.pointwise();
    Field out = make_field(g);
    out.values = neumann_factor(g, r).solve(rhs);
    return out;
}

Field step_heat_1d_boundary(const Field& x, const Eigen::Vector2d& u,
                            const Eigen::Vector2d& xi_boundary, double dt,
                            const SpdeModel& model) {
    model.validate();
    if (model.kind != SpdeKind::Heat1dBoundary)
        throw std::invalid_argument("stepper/model kind mismatch");
    if (x.grid.dim != 1) throw std::invalid_argument("boundary stepper is 1D only");
    if (dt <= 0) throw std::invalid_argument("stepper: dt must be positive");
    const Grid& g = x.grid;
    const double r = model.epsilon * dt / (g.dx * g.dx);
    // stochastic flux g = u + (1/sqrt(rho)) xi / sqrt(dt) through the ghost node
    const double noise_scale = model.noise_amplitude() / std::sqrt(dt);
    const double flux_left = u[0] + noise_scale * xi_boundary[0];
    const double flux_right = u[1] + noise_scale * xi_boundary[1];
    Eigen::VectorXd rhs = x.values;
    rhs[0] -= model.epsilon * dt * 2 * flux_left / g.dx;
    rhs[g.points - 1] += model.epsilon * dt * 2 * flux_right / g.dx;
    Field out = make_field(g);
    out.values = neumann_factor(g, r).solve(rhs);
    return out;
}

Field step_heat_2d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                   const SpdeModel& model) {
    check_step_inputs(x, u_field, w, model, SpdeKind::Heat2dDirichlet);
    const Grid& g = x.grid;
    if (g.dim != 2) throw std::invalid_argument("step_heat_2d needs a 2D grid");
    const double dt = w.dt;
    const double r = model.epsilon * dt / (g.dx * g.dx);
    const int J = g.points;

    // (I - eps*dt*L2), 5-point stencil, homogeneous Dirichlet imposed by
    // anti-reflected ghost cells (ghost = -cell).
    auto apply = [&](const Eigen::VectorXd& v) {
        Eigen::VectorXd out(v.size());
        for (int row = 0; row < J; ++row) {
            for (int col = 0; col < J; ++col) {
                const int i = g.index(row, col);
                double lap = -4.0 * v[i];
                lap += col > 0 ? v[i - 1] : -v[i];
                lap += col < J - 1 ? v[i + 1] : -v[i];
                lap += row > 0 ? v[i - J] : -v[i];
                lap += row < J - 1 ? v[i + J] : -v[i];
                out[i] = v[i] - r * lap;
            }
        }
        return out;
    };

    Eigen::VectorXd rhs =
        x.values + dt * u_field.values + model.noise_amplitude() * w.pointwise();
    Field out = make_field(g);
    out.values = conjugate_gradient(apply, rhs, 1e-10, 10 * J * J);
    return out;
}

} // namespace spde
