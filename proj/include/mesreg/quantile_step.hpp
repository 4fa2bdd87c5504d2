#pragma once

#include "mesreg/data_model.hpp"

namespace mesreg {

/// Relative gap below which x_t and v_t count as tied (rounding in the vertex solve).
inline constexpr double kTieTolerance = 1e-10;

/// First-step (VaR / quantile regression) fit.
struct VarFit {
    VectorXd theta_v;
    VectorXd fitted;   // v_t(theta_v)
    Mask exceed_mask;  // x_t > v_t(theta_v), strict; ties excluded
    double final_loss = 0.0;
    int ties = 0;      // |x_t - v_t| <= kTieTolerance * max(1, |x_t|)
    int iterations = 0;
    bool converged = false;
    /// Nonlinear links only: two multistart runs ended more than 1e-4 apart in objective.
    bool multistart_disagreement = false;

    [[nodiscard]] int exceedances() const { return static_cast<int>(exceed_mask.count()); }
};

/// Pinball loss (1{x <= v} - beta)(v - x).
double pinball_loss(double v, double x, double beta);

/// Mean pinball loss of the VaR path v_t(theta) against x.
double var_objective(const Dataset& data, const ModelSpec& spec, const VectorXd& theta);

/**
 * Minimizes the mean pinball loss over the VaR parameters.
 *
 * The objective is first minimized in smoothed (Huberized) form with the
 * smoothing annealed over four stages; the result is then polished on the
 * exact objective. For linear links the polish walks the vertices of the
 * piecewise-linear objective until no edge direction descends, so the
 * reported solution is an exact minimizer. On flat minimizing sets each
 * coordinate is moved to the left end of its flat stretch.
 */
VarFit fit_var(const Dataset& data, const ModelSpec& spec);

VectorXd predict_var(const VectorXd& theta_v, const MatrixXd& z_v, const Link& link = Link::linear());

}  // namespace mesreg
