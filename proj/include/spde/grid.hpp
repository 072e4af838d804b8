#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <vector>

namespace spde {

// Spatial discretization of the domain [0,a]^dim.
//
// 1D grids are node-centered and include both boundary nodes:
//   x_j = j * dx,  dx = a / (J - 1).
// 2D grids are cell-centered (interior nodes only, boundary enters
// through the stencil):
//   x_j = (j + 1/2) * dx,  dx = a / J,  same J and a on both axes.
struct Grid {
    int dim = 1;       // 1 or 2
    double extent = 0; // a, per axis
    int points = 0;    // J, per axis
    double dx = 0;

    int node_count() const { return dim == 1 ? points : points * points; }

    // Coordinate of node j along one axis.
    double coord(int j) const {
        return dim == 1 ? j * dx : (j + 0.5) * dx;
    }

    // Flat index of a 2D node (row r = y index, col c = x index).
    int index(int r, int c) const { return r * points + c; }

    bool same_as(const Grid& o) const {
        return dim == o.dim && points == o.points && extent == o.extent;
    }
};

inline Grid make_grid(int dim, double a, int J) {
    if (dim != 1 && dim != 2) throw std::invalid_argument("grid dim must be 1 or 2");
    if (J < 3) throw std::invalid_argument("grid needs at least 3 points per axis");
    if (a <= 0) throw std::invalid_argument("grid extent must be positive");
    Grid g;
    g.dim = dim;
    g.extent = a;
    g.points = J;
    g.dx = dim == 1 ? a / (J - 1) : a / J;
    return g;
}

// Quadrature weight of one node (rectangle rule).
inline double cell_measure(const Grid& g) {
    return g.dim == 1 ? g.dx : g.dx * g.dx;
}

// Discretized state X on a grid. values is flat, row-major for 2D.
struct Field {
    Grid grid;
    Eigen::VectorXd values;
};

inline Field make_field(const Grid& g) {
    return Field{g, Eigen::VectorXd::Zero(g.node_count())};
}

inline Field make_field(const Grid& g, const Eigen::VectorXd& v) {
    if (v.size() != g.node_count()) throw std::invalid_argument("field size mismatch");
    return Field{g, v};
}

// Rectangle-rule approximation of the L2(D) pairing <f,g>.
inline double inner_product(const Field& f, const Field& g) {
    if (!f.grid.same_as(g.grid)) throw std::invalid_argument("inner_product: grid mismatch");
    return f.values.dot(g.values) * cell_measure(f.grid);
}

} // namespace spde
