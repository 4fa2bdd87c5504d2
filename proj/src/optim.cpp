#include "mesreg/optim.hpp"

#include <cmath>

namespace mesreg::optim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

Result minimize_bfgs(const Objective& f, VectorXd x0, const Options& options) {
    const auto dim = x0.size();
    Result res;
    res.x = std::move(x0);
    VectorXd grad(dim);
    res.value = f(res.x, &grad);
    MatrixXd h = MatrixXd::Identity(dim, dim);
    bool scaled = false;

    VectorXd next(dim);
    VectorXd next_grad(dim);
    for (res.iterations = 0; res.iterations < options.max_iterations; ++res.iterations) {
        res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
        if (res.gradient_norm <= options.gradient_tolerance) {
            res.converged = true;
            return res;
        }
        VectorXd dir = -h * grad;
        double slope = grad.dot(dir);
        if (!(slope < 0.0)) {
            h.setIdentity();
            dir = -grad;
            slope = -grad.squaredNorm();
        }

        double step = 1.0;
        double next_value = 0.0;
        bool accepted = false;
        for (int k = 0; k < 60; ++k) {
            next = res.x + step * dir;
            next_value = f(next, &next_grad);
            if (std::isfinite(next_value) && next_value <= res.value + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted || next_value >= res.value) {
            res.stalled = true;
            return res;
        }

        const VectorXd s = next - res.x;
        const VectorXd yv = next_grad - grad;
        const double sy = s.dot(yv);
        if (sy > 1e-14 * s.norm() * yv.norm()) {
            if (!scaled) {
                h *= sy / yv.squaredNorm();
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const VectorXd hy = h * yv;
            h += (rho * rho * yv.dot(hy) + rho) * (s * s.transpose()) - rho * (hy * s.transpose() + s * hy.transpose());
        }
        res.x = next;
        res.value = next_value;
        grad = next_grad;
    }
    res.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    res.converged = res.gradient_norm <= options.gradient_tolerance;
    return res;
}

}  // namespace mesreg::optim
