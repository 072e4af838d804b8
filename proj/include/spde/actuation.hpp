#pragma once

#include "spde/grid.hpp"
#include "spde/noise.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace spde {

enum class ActuatorKind { GaussianDistributed, BoundaryIndicator };

// Finite actuation m(x): column l holds the l-th shape function sampled at
// every grid node. gram is the Gram matrix sum_j m(x_j) m(x_j)^T dx^d, so
// u^T gram u = <Phi, Phi> for Phi = m(x)^T u.
struct ActuatorMap {
    Grid grid;
    ActuatorKind kind = ActuatorKind::GaussianDistributed;
    Eigen::MatrixXd shapes; // node_count x N
    Eigen::MatrixXd gram;   // N x N

    int count() const { return static_cast<int>(shapes.cols()); }
};

inline Eigen::MatrixXd actuator_gram(const Grid& grid, const Eigen::MatrixXd& shapes) {
    return shapes.transpose() * shapes * cell_measure(grid);
}

// Gaussian shape functions exp(-|x - mu_l|^2 / (2 sigma^2)), one column per
// center. centers holds dim coordinates per actuator.
inline ActuatorMap gaussian_actuator_map(const Grid& grid,
                                         const std::vector<std::vector<double>>& centers,
                                         double sigma2) {
    if (sigma2 <= 0) throw std::invalid_argument("actuator variance must be positive");
    const int n = static_cast<int>(centers.size());
    if (n == 0) throw std::invalid_argument("need at least one actuator");
    for (const auto& c : centers) {
        if (static_cast<int>(c.size()) != grid.dim)
            throw std::invalid_argument("actuator center dimension mismatch");
        for (double v : c)
            if (v < 0 || v > grid.extent)
                throw std::invalid_argument("actuator center outside the domain");
    }
    ActuatorMap map;
    map.grid = grid;
    map.kind = ActuatorKind::GaussianDistributed;
    map.shapes.resize(grid.node_count(), n);
    for (int l = 0; l < n; ++l) {
        if (grid.dim == 1) {
            for (int j = 0; j < grid.points; ++j) {
                const double d = grid.coord(j) - centers[l][0];
                map.shapes(j, l) = std::exp(-d * d / (2 * sigma2));
            }
        } else {
            for (int r = 0; r < grid.points; ++r)
                for (int c = 0; c < grid.points; ++c) {
                    const double dx = grid.coord(c) - centers[l][0];
                    const double dy = grid.coord(r) - centers[l][1];
                    map.shapes(grid.index(r, c), l) =
                        std::exp(-(dx * dx + dy * dy) / (2 * sigma2));
                }
        }
    }
    map.gram = actuator_gram(grid, map.shapes);
    return map;
}

// Two indicator actuators on the boundary nodes of a 1D grid.
inline ActuatorMap boundary_actuator_map(const Grid& grid) {
    if (grid.dim != 1) throw std::invalid_argument("boundary actuation is 1D only");
    ActuatorMap map;
    map.grid = grid;
    map.kind = ActuatorKind::BoundaryIndicator;
    map.shapes = Eigen::MatrixXd::Zero(grid.node_count(), 2);
    map.shapes(0, 0) = 1.0;
    map.shapes(grid.points - 1, 1) = 1.0;
    map.gram = actuator_gram(grid, map.shapes);
    return map;
}

// Phi = m(x)^T u as a field over the grid.
inline Field control_field(const ActuatorMap& map, const Eigen::VectorXd& u) {
    if (u.size() != map.count()) throw std::invalid_argument("control vector length mismatch");
    return Field{map.grid, map.shapes * u};
}

} // namespace spde
