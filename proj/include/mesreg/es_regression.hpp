#pragma once

#include "mesreg/data_model.hpp"
#include "mesreg/mes_step.hpp"
#include "mesreg/quantile_step.hpp"

#include <optional>
#include <string>
#include <vector>

namespace mesreg {

/// Joint (VaR, ES) regression: the MES model with y = x.
struct EsFit {
    VectorXd theta_v;
    VectorXd theta_e;
    std::optional<MatrixXd> avar;
    std::optional<VectorXd> se;
    std::optional<double> bandwidth;
    std::optional<FitDiagnostics> diagnostics;
    int n = 0;
    int exceedance_count = 0;
    bool converged = false;
    std::vector<std::string> warnings;

    [[nodiscard]] VectorXd estimates() const;
};

/// Cross matrix mean((v - m)(2c)^-1 1{|x - v| < c} grad m grad v'), q x p.
MatrixXd lambda2_es(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit, const MesFit& es_fit,
                    double c_n);

/// ES regression on a dataset; its y column is replaced by x.
EsFit fit_es(Dataset data, const ModelSpec& spec);

/// Linear ES regression of x on (z_v, z_e).
EsFit fit_es(const VectorXd& x, const MatrixXd& z_v, const MatrixXd& z_e, double beta);

/// Dataset with y = x, as used by the ES fit.
Dataset es_dataset(Dataset data);

/// ES of x split into MES components y_d sharing the VaR exceedance mask of x.
struct Decomposition {
    EsFit es;
    std::vector<JointFit> components;  // one MES regression per column of y
    VectorXd mean_weights;             // column means of the weight matrix
    VectorXd weighted_sum;             // sum_d mean_weights_d * theta_m_d
    VectorXd residual;                 // theta_e - weighted_sum
};

/**
 * Fits one linear VaR regression on x, the ES regression of x, and one MES
 * regression per column of `components` on the shared exceedance mask.
 * The residual vanishes when the weights are constant and x equals the
 * weighted sum of the components.
 */
Decomposition decompose(const VectorXd& x, const MatrixXd& components, const MatrixXd& weights, const MatrixXd& z_v,
                        const MatrixXd& z_m, double beta);

}  // namespace mesreg
