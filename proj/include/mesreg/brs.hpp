#pragma once

#include "mesreg/data_model.hpp"

namespace mesreg {

inline constexpr int kDefaultBrsWindow = 250;

/// Rolling-window MES regression baseline.
struct BrsFit {
    VectorXd theta;
    VectorXd se_ols;
    VectorXd y_star;  // Y*_t for t = S, ..., n-1
    int window = 0;   // S; each window holds S + 1 points
};

/// Smallest window S with S + 1 >= ceil(1 / (1 - beta)) points.
int min_brs_window(double beta);

/**
 * Y*_t = mean of y_s over s in [t - S, t] with x_s >= Q_t, where Q_t is the
 * type-1 empirical beta-quantile of x over the same window. Output index k
 * corresponds to t = S + k.
 */
VectorXd brs_transform(const VectorXd& y, const VectorXd& x, int window, double beta);

/// OLS of Y* on the rows S..n-1 of z_m with homoskedastic standard errors.
BrsFit fit_brs(const Dataset& data, int window, double beta);

}  // namespace mesreg
