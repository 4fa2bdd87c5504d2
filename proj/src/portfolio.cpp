#include "mesreg/portfolio.hpp"

#include "mesreg/mes_step.hpp"
#include "mesreg/quantile_step.hpp"
#include "mesreg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace mesreg {

namespace {

void check_simplex(const VectorXd& w) {
    if ((w.array() < 0.0).any() || std::abs(w.sum() - 1.0) > 1e-12) {
        throw Error(ErrorCode::numeric, "portfolio weights left the simplex");
    }
}

double spread_of(const VectorXd& rc) { return rc.maxCoeff() - rc.minCoeff(); }

}  // namespace

RiskContributions risk_contributions(const MatrixXd& losses, const VectorXd& weights, const MatrixXd& z,
                                     double beta, int t_forecast) {
    const auto d_count = losses.cols();
    if (weights.size() != d_count) throw Error(ErrorCode::dimension, "one weight per component is required");
    if (t_forecast < 1 || t_forecast >= z.rows() || t_forecast > losses.rows()) {
        throw Error(ErrorCode::dimension, "forecast row must lie in [1, rows of z)");
    }
    const MatrixXd past = losses.topRows(t_forecast);
    const MatrixXd z_past = z.topRows(t_forecast);
    const VectorXd x = past * weights;

    const Dataset portfolio = make_dataset(x, x, z_past, z_past);
    const ModelSpec spec = ModelSpec::linear(beta, portfolio);
    validate(portfolio, spec);
    const VarFit var_fit = fit_var(portfolio, spec);
    const VectorXd z_t = z.row(t_forecast).transpose();

    RiskContributions out;
    out.var_forecast = z_t.dot(var_fit.theta_v);
    out.es_forecast = z_t.dot(fit_mes(portfolio, spec, var_fit).theta_m);
    out.exceedances = var_fit.exceedances();
    out.rc.resize(d_count);
    Dataset component = portfolio;
    for (Eigen::Index d = 0; d < d_count; ++d) {
        component.y = weights(d) * past.col(d);
        out.rc(d) = z_t.dot(fit_mes(component, spec, var_fit).theta_m);
    }
    return out;
}

PortfolioState erc_weights(const MatrixXd& losses, const MatrixXd& z, double beta, int t_forecast,
                           const ErcOptions& options) {
    if (!(options.tolerance > 0.0) || options.max_iterations < 0) {
        throw Error(ErrorCode::level, "ERC tolerance must be positive and the iteration budget nonnegative");
    }
    const auto d_count = losses.cols();
    if (d_count < 1) throw Error(ErrorCode::dimension, "at least one component is required");
    PortfolioState state;
    state.weights = VectorXd::Constant(d_count, 1.0 / static_cast<double>(d_count));
    // Evaluated passes kept for the non-converged exit.
    struct Pass {
        VectorXd weights, rc;
        double es = 0.0, spread = 0.0;
    };
    std::vector<Pass> recent;
    for (;;) {
        check_simplex(state.weights);
        const RiskContributions rc = risk_contributions(losses, state.weights, z, beta, t_forecast);
        if (!rc.rc.allFinite()) throw Error(ErrorCode::numeric, "risk contribution forecast is not finite");
        state.rc_forecasts = rc.rc;
        state.es_forecast = rc.es_forecast;
        state.spread = spread_of(rc.rc);
        state.spread_trace.push_back(state.spread);
        state.weight_trace.push_back(state.weights);
        if (state.spread <= options.tolerance) {
            state.converged = true;
            break;
        }
        recent.push_back({state.weights, rc.rc, rc.es_forecast, state.spread});
        if (recent.size() > 3) recent.erase(recent.begin());
        if (state.iterations >= options.max_iterations) {
            // Budget exhausted: report the best of the last three passes.
            const auto best = std::min_element(recent.begin(), recent.end(),
                                               [](const Pass& a, const Pass& b) { return a.spread < b.spread; });
            state.weights = best->weights;
            state.rc_forecasts = best->rc;
            state.es_forecast = best->es;
            state.spread = best->spread;
            break;
        }

        double positive_sum = 0.0;
        int positive = 0;
        for (const double v : rc.rc) {
            if (v > 0.0) {
                positive_sum += v;
                ++positive;
            }
        }
        if (positive == 0) {
            Eigen::Index worst = 0;
            rc.rc.maxCoeff(&worst);
            throw Error(ErrorCode::update_domain, "all risk contributions are nonpositive (component " +
                                                      std::to_string(worst) + " has RC " +
                                                      std::to_string(rc.rc(worst)) + ")");
        }
        const double floor = 1e-6 * positive_sum / positive;
        VectorXd updated(d_count);
        for (Eigen::Index d = 0; d < d_count; ++d) {
            double r = rc.rc(d);
            if (r < floor) {
                r = floor;
                state.clamped = true;
            }
            updated(d) = state.weights(d) / (2.0 * r) + state.weights(d) / 2.0;
        }
        state.weights = updated / updated.lpNorm<1>();
        ++state.iterations;
    }
    return state;
}

PerformanceMetrics performance_metrics(const VectorXd& losses, double beta) {
    if (losses.size() < 2) throw Error(ErrorCode::dimension, "performance metrics need at least two losses");
    const std::span<const double> view(losses.data(), static_cast<std::size_t>(losses.size()));
    PerformanceMetrics m;
    m.avg_return = -stats::mean(view);
    m.std = stats::sample_sd(view);
    m.var = stats::quantile_type1(view, beta);
    double sum = 0.0;
    int count = 0;
    for (const double v : view) {
        if (v >= m.var) {
            sum += v;
            ++count;
        }
    }
    m.es = sum / count;
    if (m.std > 0.0) m.sharpe = m.avg_return / m.std;
    if (m.es != 0.0) m.rorac = m.avg_return / m.es;
    return m;
}

namespace {

Backtest run_backtest(const MatrixXd& losses, int start, int step,
                      const std::function<VectorXd(int, Backtest&)>& rebalance, double beta) {
    const auto n = static_cast<int>(losses.rows());
    if (step < 1) throw Error(ErrorCode::dimension, "rebalancing step must be positive");
    if (start < 1 || start >= n) throw Error(ErrorCode::dimension, "backtest start must lie in [1, n)");
    Backtest bt;
    std::vector<VectorXd> rows;
    std::vector<double> realized;
    VectorXd w;
    for (int t = start; t < n; ++t) {
        if ((t - start) % step == 0) w = rebalance(t, bt);
        bt.dates.push_back(t);
        rows.push_back(w);
        realized.push_back(losses.row(t).dot(w));
    }
    bt.weights.resize(static_cast<Eigen::Index>(rows.size()), losses.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) bt.weights.row(static_cast<Eigen::Index>(k)) = rows[k].transpose();
    bt.portfolio_losses = Eigen::Map<const VectorXd>(realized.data(), static_cast<Eigen::Index>(realized.size()));
    bt.metrics = performance_metrics(bt.portfolio_losses, beta);
    return bt;
}

}  // namespace

Backtest backtest_erc(const MatrixXd& losses, const MatrixXd& z, double beta, int start, int step,
                      const ErcOptions& options) {
    if (z.rows() != losses.rows()) throw Error(ErrorCode::dimension, "losses and covariates must share rows");
    return run_backtest(
        losses, start, step,
        [&](int t, Backtest& bt) {
            const PortfolioState state = erc_weights(losses, z, beta, t, options);
            bt.iterations.push_back(state.iterations);
            bt.converged.push_back(state.converged);
            return state.weights;
        },
        beta);
}

Backtest backtest_equal_weight(const MatrixXd& losses, double beta, int start, int step) {
    const VectorXd w = VectorXd::Constant(losses.cols(), 1.0 / static_cast<double>(losses.cols()));
    return run_backtest(losses, start, step, [&](int, Backtest&) { return w; }, beta);
}

}  // namespace mesreg
