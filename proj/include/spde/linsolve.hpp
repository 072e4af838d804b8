#pragma once

#include <Eigen/Dense>
#include <functional>
#include <stdexcept>

namespace spde {

// Tridiagonal system solved by the Thomas algorithm. The forward
// elimination is precomputed once so repeated solves against the same
// matrix are a single sweep.
class TridiagFactor {
public:
    // sub/super have size n-1, diag has size n.
    TridiagFactor(const Eigen::VectorXd& sub, const Eigen::VectorXd& diag,
                  const Eigen::VectorXd& super)
        : sub_(sub), cp_(diag.size() - 1), inv_denom_(diag.size()) {
        const auto n = diag.size();
        if (sub.size() != n - 1 || super.size() != n - 1)
            throw std::invalid_argument("tridiagonal band size mismatch");
        double denom = diag[0];
        if (denom == 0) throw std::runtime_error("singular tridiagonal system");
        inv_denom_[0] = 1.0 / denom;
        for (Eigen::Index i = 1; i < n; ++i) {
            cp_[i - 1] = super[i - 1] * inv_denom_[i - 1];
            denom = diag[i] - sub[i - 1] * cp_[i - 1];
            if (denom == 0) throw std::runtime_error("singular tridiagonal system");
            inv_denom_[i] = 1.0 / denom;
        }
    }

    Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
        const auto n = inv_denom_.size();
        Eigen::VectorXd x(n);
        x[0] = rhs[0] * inv_denom_[0];
        for (Eigen::Index i = 1; i < n; ++i)
            x[i] = (rhs[i] - sub_[i - 1] * x[i - 1]) * inv_denom_[i];
        for (Eigen::Index i = n - 2; i >= 0; --i)
            x[i] -= cp_[i] * x[i + 1];
        return x;
    }

private:
    Eigen::VectorXd sub_;
    Eigen::VectorXd cp_;        // eliminated super-diagonal
    Eigen::VectorXd inv_denom_; // reciprocal pivots
};

// Matrix-free conjugate gradient for SPD operators.
// Converges to |Ax - b| <= rel_tol |b|; throws on iteration overrun.
inline Eigen::VectorXd conjugate_gradient(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
    const Eigen::VectorXd& b, double rel_tol, int max_iters) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    Eigen::VectorXd r = b;
    Eigen::VectorXd p = r;
    double rr = r.squaredNorm();
    const double stop2 = rel_tol * rel_tol * b.squaredNorm();
    if (rr <= stop2) return x;
    for (int it = 0; it < max_iters; ++it) {
        const Eigen::VectorXd ap = apply(p);
        const double alpha = rr / p.dot(ap);
        x += alpha * p;
        r -= alpha * ap;
        const double rr_next = r.squaredNorm();
        if (rr_next <= stop2) return x;
        p = r + (rr_next / rr) * p;
        rr = rr_next;
    }
    throw std::runtime_error("conjugate gradient failed to converge");
}

} // namespace spde
