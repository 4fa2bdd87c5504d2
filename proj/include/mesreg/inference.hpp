#pragma once

#include "mesreg/data_model.hpp"
#include "mesreg/mes_step.hpp"
#include "mesreg/quantile_step.hpp"

#include <string>
#include <vector>

namespace mesreg {

/// Kernel bandwidth c_n = MAD * [Phi^-1(beta + m) - Phi^-1(beta - m)].
struct Bandwidth {
    double c_n = 0.0;
    double mad = 0.0;
    double m = 0.0;  // m(n, beta)
};

/// m(n, beta) = n^(-1/3) Phi^-1(0.975)^(2/3) (1.5 phi(Phi^-1(beta))^2 / (2 Phi^-1(beta)^2 + 1))^(1/3).
double bandwidth_rate(int n, double beta);

/// Bandwidth from the first-step residuals x_t - v_t; n is the residual count.
Bandwidth bandwidth(const VectorXd& var_residuals, double beta);

/**
 * Plug-in estimates of the sandwich ingredients at the fitted parameters:
 *
 *   V       = beta(1-beta) mean(grad v grad v')
 *   Lambda  = mean((2c)^-1 1{|x - v| < c} grad v grad v')
 *   M*      = mean((y - m)^2 1{x > v} grad m grad m')
 *   Lambda1 = (1-beta) mean(grad m grad m')
 *   Lambda2 = mean((y - m)(2c)^-1 1{|x - v| < c} grad m grad v')
 *
 * Symmetric outputs are symmetrized. An empty kernel window gives a zero
 * Lambda with infinite condition number.
 */
FitDiagnostics estimate_matrices(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit,
                                 const MesFit& mes_fit, const Bandwidth& bw);

/// Condition-number guard for inverting Lambda and Lambda1.
inline constexpr double kMaxCondition = 1e12;

/// Gamma M Gamma' with Gamma = [[L^-1, 0], [-L1^-1 L2 L^-1, L1^-1]], M = blockdiag(V, M*).
MatrixXd sandwich(const FitDiagnostics& diag);

struct InferenceReport {
    std::vector<std::string> names;
    VectorXd estimate;
    VectorXd se;
    VectorXd t_stats;
    VectorXd p_values;
    VectorXd ci_lower;
    VectorXd ci_upper;
    double level = 0.95;
};

/// Normal-reference t statistics, two-sided p-values and confidence intervals.
InferenceReport report(const VectorXd& estimate, const MatrixXd& avar, int n, double level = 0.95);
InferenceReport report(const JointFit& fit, double level = 0.95);

/// Parameter labels "v:<name>" / "m:<name>" for a dataset's covariates.
std::vector<std::string> parameter_names(const Dataset& data, const ModelSpec& spec);

}  // namespace mesreg
