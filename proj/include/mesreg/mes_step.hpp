#pragma once

#include "mesreg/data_model.hpp"
#include "mesreg/quantile_step.hpp"

#include <functional>

namespace mesreg {

/// Second-step (MES) fit on the first-step exceedances.
struct MesFit {
    VectorXd theta_m;
    VectorXd fitted;  // m_t(theta_m)
    int n_exceed = 0;
    double final_loss = 0.0;
    bool converged = false;
    bool multistart_disagreement = false;
};

/// (1/n) sum_t 1/2 * mask_t * (y_t - m_t(theta))^2.
double mes_objective(const Dataset& data, const ModelSpec& spec, const Mask& mask, const VectorXd& theta);

/**
 * Minimizes the truncated squared-error loss given the VaR fit.
 *
 * Linear links reduce to least squares on the exceedance subsample, solved
 * with a column-pivoted QR; an intercept-only design returns the subsample
 * mean directly. Nonlinear links use BFGS with multistart.
 */
MesFit fit_mes(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit);

/// Builds the q x p cross matrix used in the sandwich (MES or ES variant).
using CrossMatrix =
    std::function<MatrixXd(const Dataset&, const ModelSpec&, const VarFit&, const MesFit&, double c_n)>;

/// Minimum exceedances for inference: max(q, 5).
int min_exceedances_for_inference(int q);

/**
 * Assembles a JointFit from the two steps and attaches inference.
 *
 * Inference failures (degenerate bandwidth, singular plug-in blocks, too few
 * exceedances) leave the covariance fields empty and record a warning.
 * `cross` replaces the default MES cross matrix when given.
 */
JointFit complete_fit(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit, const MesFit& mes_fit,
                      const CrossMatrix& cross = nullptr);

/// Two-step fit: VaR step, MES step, then the sandwich covariance.
JointFit fit_joint(const Dataset& data, const ModelSpec& spec);

}  // namespace mesreg
