#include "mesreg/brs.hpp"

#include "mesreg/stats.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace mesreg {

int min_brs_window(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorCode::level, "beta must lie strictly between 0 and 1");
    // The S + 1 window points must number at least ceil(1 / (1 - beta)).
    // 1/(1 - 0.9) evaluates to 10.000000000000002; the slack keeps exact ratios exact.
    return std::max(static_cast<int>(std::ceil(1.0 / (1.0 - beta) - 1e-9)) - 1, 1);
}

VectorXd brs_transform(const VectorXd& y, const VectorXd& x, int window, double beta) {
    if (y.size() != x.size()) throw Error(ErrorCode::dimension, "y and x must have the same length");
    const int required = min_brs_window(beta);
    if (window < required) {
        throw Error(ErrorCode::window, "window S = " + std::to_string(window) + " is shorter than the required " +
                                           std::to_string(required) + " at beta = " + std::to_string(beta));
    }
    const auto n = static_cast<int>(x.size());
    if (n <= window) {
        throw Error(ErrorCode::window,
                    "series of length " + std::to_string(n) + " is not longer than the window " + std::to_string(window));
    }
    VectorXd y_star(n - window);
    std::vector<double> buffer(static_cast<std::size_t>(window) + 1);
    for (int t = window; t < n; ++t) {
        const int first = t - window;
        for (int s = first; s <= t; ++s) buffer[static_cast<std::size_t>(s - first)] = x(s);
        const double q = stats::quantile_type1(buffer, beta);
        double sum = 0.0;
        int count = 0;
        for (int s = first; s <= t; ++s) {
            if (x(s) >= q) {
                sum += y(s);
                ++count;
            }
        }
        y_star(t - window) = sum / count;
    }
    return y_star;
}

BrsFit fit_brs(const Dataset& data, int window, double beta) {
    BrsFit fit;
    fit.window = window;
    fit.y_star = brs_transform(data.y, data.x, window, beta);
    const auto rows = fit.y_star.size();
    const auto k = data.z_m.cols();
    const MatrixXd z = data.z_m.bottomRows(rows);
    if (rows <= k) {
        throw Error(ErrorCode::dimension, "BRS regression needs more transformed observations than regressors");
    }
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(z);
    if (qr.rank() < k) throw Error(ErrorCode::singularity, "BRS design matrix is rank deficient");
    fit.theta = qr.solve(fit.y_star);
    const VectorXd resid = fit.y_star - z * fit.theta;
    const double sigma2 = resid.squaredNorm() / static_cast<double>(rows - k);
    const MatrixXd gram_inv = Eigen::ColPivHouseholderQR<MatrixXd>(z.transpose() * z).inverse();
    fit.se_ols = (sigma2 * gram_inv.diagonal().array()).max(0.0).sqrt().matrix();
    return fit;
}

}  // namespace mesreg
