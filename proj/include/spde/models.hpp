#pragma once

#include "spde/grid.hpp"
#include "spde/noise.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace spde {

enum class SpdeKind {
    Heat1dDirichlet,
    Heat2dDirichlet,
    Burgers1dDirichlet,
    Nagumo1dNeumann,
    Heat1dBoundary,
};

std::string to_string(SpdeKind kind);
SpdeKind spde_kind_from_string(const std::string& s);

// Semi-linear SPDE dX = (A X + F(X)) dt + Phi dt + sigma dW with the
// linear diffusion treated implicitly. sigma defaults to 1/sqrt(rho).
struct SpdeModel {
    SpdeKind kind = SpdeKind::Heat1dDirichlet;
    double epsilon = 1.0; // diffusivity / viscosity
    double alpha = 0.0;   // Nagumo reaction parameter
    double rho = 10.0;    // inverse noise variance
    double sigma = -1.0;  // noise amplitude; negative means 1/sqrt(rho)
    double bc_left = 0.0; // Dirichlet values where applicable
    double bc_right = 0.0;

    double noise_amplitude() const { return sigma >= 0 ? sigma : 1.0 / std::sqrt(rho); }

    void validate() const {
        if (epsilon <= 0) throw std::invalid_argument("epsilon must be positive");
        if (rho <= 0) throw std::invalid_argument("rho must be positive");
    }
};

// One semi-implicit Euler step of each model. The implicit side is the
// diffusion (I - eps*dt*L); control, reaction, advection and noise enter
// explicitly on the right-hand side. dt is taken from the noise increment.
Field step_heat_1d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                   const SpdeModel& model);
Field step_heat_2d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                   const SpdeModel& model);
Field step_burgers_1d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                      const SpdeModel& model);
Field step_nagumo_1d(const Field& x, const Field& u_field, const NoiseIncrement& w,
                     const SpdeModel& model);

// Boundary-actuated 1D heat step: Neumann fluxes h_x(0) = u[0] + xi[0]/(sqrt(rho*dt))
// and h_x(a) = u[1] + xi[1]/(sqrt(rho*dt)) enter the ghost-node relation.
Field step_heat_1d_boundary(const Field& x, const Eigen::Vector2d& u,
                            const Eigen::Vector2d& xi_boundary, double dt,
                            const SpdeModel& model);

// Smallest eigenvalue of the discrete (negated) Laplacian on one axis;
// the deterministic heat step damps the first eigenmode by
// 1 / (1 + eps*dt*lambda) per step.
inline double discrete_laplacian_eigenvalue(const Grid& g) {
    return 2.0 / (g.dx * g.dx) * (1.0 - std::cos(M_PI * g.dx / g.extent));
}

} // namespace spde
