#pragma once

#include "mesreg/data_model.hpp"

#include <optional>
#include <vector>

namespace mesreg {

/// One-step-ahead Euler risk contributions of a weighted portfolio.
struct RiskContributions {
    VectorXd rc;              // MES forecasts of w_d * y_d, length D
    double es_forecast = 0.0;   // ES forecast of x = sum_d w_d y_d
    double var_forecast = 0.0;  // VaR forecast of x
    int exceedances = 0;
};

/**
 * Fits a linear VaR regression of the portfolio loss on z over rows s < t,
 * one MES regression per weighted component on the shared exceedance mask,
 * and evaluates all of them at z_t. Rows >= t of `losses` are never read.
 */
RiskContributions risk_contributions(const MatrixXd& losses, const VectorXd& weights, const MatrixXd& z,
                                     double beta, int t_forecast);

struct ErcOptions {
    double tolerance = 0.01;
    int max_iterations = 200;
};

struct PortfolioState {
    VectorXd weights;
    VectorXd rc_forecasts;  // evaluated at `weights`
    double es_forecast = 0.0;
    int iterations = 0;  // weight updates performed
    double spread = 0.0;  // max_d RC_d - min_d RC_d
    bool converged = false;
    bool clamped = false;  // a nonpositive RC was clamped during an update
    std::vector<double> spread_trace;
    std::vector<VectorXd> weight_trace;  // weights at each pass, starting with 1/D
};

/**
 * Equal-risk-contribution weights by the fixed-point update w <- w / (2 RC) + w / 2, renormalized.
 * Without convergence the state of the pass with the smallest spread among
 * the last three is returned and `converged` is false.
 */
PortfolioState erc_weights(const MatrixXd& losses, const MatrixXd& z, double beta, int t_forecast,
                           const ErcOptions& options = {});

struct PerformanceMetrics {
    double avg_return = 0.0;  // -mean(loss)
    double std = 0.0;
    double var = 0.0;  // type-1 empirical beta-quantile
    double es = 0.0;   // mean of losses >= var
    std::optional<double> sharpe;
    std::optional<double> rorac;
};

PerformanceMetrics performance_metrics(const VectorXd& losses, double beta);

struct Backtest {
    std::vector<int> dates;  // forecast rows
    MatrixXd weights;        // one row per date
    VectorXd portfolio_losses;
    std::vector<int> iterations;
    std::vector<bool> converged;
    PerformanceMetrics metrics;
};

/// Rebalances every `step` rows from `start` on; weights are held in between.
Backtest backtest_erc(const MatrixXd& losses, const MatrixXd& z, double beta, int start, int step,
                      const ErcOptions& options = {});

/// Equal-weight benchmark over the same dates.
Backtest backtest_equal_weight(const MatrixXd& losses, double beta, int start, int step);

}  // namespace mesreg
