#pragma once

#include <Eigen/Dense>

#include <functional>

namespace mesreg::optim {

/// f(x); writes the gradient into *grad when grad is non-null.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct Options {
    int max_iterations = 500;
    double gradient_tolerance = 1e-8;
};

struct Result {
    Eigen::VectorXd x;
    double value = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;  // gradient tolerance met
    bool stalled = false;    // line search could not reduce f any further
};

/// Quasi-Newton (BFGS, inverse-Hessian form) with backtracking Armijo line search.
Result minimize_bfgs(const Objective& f, Eigen::VectorXd x0, const Options& options = {});

}  // namespace mesreg::optim
