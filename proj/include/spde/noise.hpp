#pragma once

#include "spde/grid.hpp"

#include <cmath>
#include <random>

namespace spde {

using Rng = std::mt19937_64;

// One time-step increment of the cylindrical Wiener process, truncated to
// the indicator basis e_j = dx^{-d/2} 1_{cell j}. xi holds the raw N(0,1)
// draws; the pointwise field increment at node j is xi_j * sqrt(dt / dx^d),
// so that <f, dW> = sum_j f_j xi_j sqrt(dt) sqrt(dx^d).
struct NoiseIncrement {
    Grid grid;
    Eigen::VectorXd xi;
    double dt = 0;

    // Pointwise increment as a field over the grid.
    Eigen::VectorXd pointwise() const {
        return xi * std::sqrt(dt / cell_measure(grid));
    }
};

inline NoiseIncrement sample_noise(const Grid& grid, double dt, Rng& rng) {
    NoiseIncrement w;
    w.grid = grid;
    w.dt = dt;
    w.xi.resize(grid.node_count());
    std::normal_distribution<double> n01(0.0, 1.0);
    for (int j = 0; j < w.xi.size(); ++j) w.xi[j] = n01(rng);
    return w;
}

inline NoiseIncrement zero_noise(const Grid& grid, double dt) {
    return NoiseIncrement{grid, Eigen::VectorXd::Zero(grid.node_count()), dt};
}

// <f, dW> under the indicator-basis truncation.
inline double noise_pairing(const Field& f, const NoiseIncrement& w) {
    if (!f.grid.same_as(w.grid)) throw std::invalid_argument("noise_pairing: grid mismatch");
    return f.values.dot(w.xi) * std::sqrt(w.dt) * std::sqrt(cell_measure(f.grid));
}

} // namespace spde
