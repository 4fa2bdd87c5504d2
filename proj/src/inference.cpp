#include "mesreg/inference.hpp"

#include "mesreg/stats.hpp"

#include <cmath>
#include <limits>

namespace mesreg {

namespace {

MatrixXd symmetrized(const MatrixXd& a) { return 0.5 * (a + a.transpose()); }

MatrixXd guarded_inverse(const MatrixXd& a, double cond, const char* block) {
    if (!(cond < kMaxCondition)) {
        throw Error(ErrorCode::singularity, std::string(block) + " is singular or ill-conditioned (condition number " +
                                                std::to_string(cond) + ")");
    }
    return Eigen::ColPivHouseholderQR<MatrixXd>(a).inverse();
}

}  // namespace

double bandwidth_rate(int n, double beta) {
    const double zq = stats::normal_quantile(beta);
    const double dens = stats::normal_pdf(zq);
    const double z975 = stats::normal_quantile(0.975);
    return std::pow(static_cast<double>(n), -1.0 / 3.0) * std::pow(z975, 2.0 / 3.0) *
           std::cbrt(1.5 * dens * dens / (2.0 * zq * zq + 1.0));
}

Bandwidth bandwidth(const VectorXd& var_residuals, double beta) {
    const auto n = static_cast<int>(var_residuals.size());
    if (n < 2) throw Error(ErrorCode::dimension, "bandwidth needs at least two residuals");
    if (!(beta > 0.0 && beta < 1.0)) throw Error(ErrorCode::level, "beta must lie strictly between 0 and 1");
    Bandwidth bw;
    bw.mad = stats::mad(std::span<const double>(var_residuals.data(), static_cast<std::size_t>(n)));
    if (!(bw.mad > 0.0)) {
        throw Error(ErrorCode::degenerate_bandwidth, "median absolute deviation of the VaR residuals is zero");
    }
    bw.m = bandwidth_rate(n, beta);
    if (!(beta - bw.m > 0.0 && beta + bw.m < 1.0)) {
        throw Error(ErrorCode::level, "beta +/- m(n, beta) leaves (0, 1) for n = " + std::to_string(n) +
                                          "; use a larger sample");
    }
    bw.c_n = bw.mad * (stats::normal_quantile(beta + bw.m) - stats::normal_quantile(beta - bw.m));
    return bw;
}

FitDiagnostics estimate_matrices(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit,
                                 const MesFit& mes_fit, const Bandwidth& bw) {
    const auto n = static_cast<double>(data.n());
    const double beta = spec.beta;
    const double c = bw.c_n;
    const MatrixXd grad_v = spec.var_link.jacobian(data.z_v, var_fit.theta_v);  // n x p
    const MatrixXd grad_m = spec.mes_link.jacobian(data.z_m, mes_fit.theta_m);  // n x q

    VectorXd kernel(data.n());
    VectorXd tail_sq(data.n());
    FitDiagnostics diag;
    for (Eigen::Index t = 0; t < data.n(); ++t) {
        const bool inside = std::abs(data.x(t) - var_fit.fitted(t)) < c;
        kernel(t) = inside ? 1.0 / (2.0 * c) : 0.0;
        diag.kernel_count += inside ? 1 : 0;
        const double e = data.y(t) - mes_fit.fitted(t);
        tail_sq(t) = var_fit.exceed_mask(t) ? e * e : 0.0;
    }
    const VectorXd resid_m = data.y - mes_fit.fitted;

    diag.v = symmetrized(beta * (1.0 - beta) * (grad_v.transpose() * grad_v) / n);
    diag.lambda = symmetrized(grad_v.transpose() * kernel.asDiagonal() * grad_v / n);
    diag.m_star = symmetrized(grad_m.transpose() * tail_sq.asDiagonal() * grad_m / n);
    diag.lambda1 = symmetrized((1.0 - beta) * (grad_m.transpose() * grad_m) / n);
    diag.lambda2 = grad_m.transpose() * (resid_m.array() * kernel.array()).matrix().asDiagonal() * grad_v / n;
    diag.cond_lambda = stats::condition_number(diag.lambda);
    diag.cond_lambda1 = stats::condition_number(diag.lambda1);
    return diag;
}

MatrixXd sandwich(const FitDiagnostics& diag) {
    const auto p = diag.lambda.rows();
    const auto q = diag.lambda1.rows();
    if (diag.lambda2.rows() != q || diag.lambda2.cols() != p) {
        throw Error(ErrorCode::dimension, "Lambda2 must be q x p");
    }
    const MatrixXd lambda_inv = guarded_inverse(diag.lambda, diag.cond_lambda, "Lambda (VaR density block)");
    const MatrixXd lambda1_inv = guarded_inverse(diag.lambda1, diag.cond_lambda1, "Lambda1 (MES block)");

    MatrixXd gamma = MatrixXd::Zero(p + q, p + q);
    gamma.topLeftCorner(p, p) = lambda_inv;
    gamma.bottomLeftCorner(q, p) = -lambda1_inv * diag.lambda2 * lambda_inv;
    gamma.bottomRightCorner(q, q) = lambda1_inv;

    MatrixXd middle = MatrixXd::Zero(p + q, p + q);
    middle.topLeftCorner(p, p) = diag.v;
    middle.bottomRightCorner(q, q) = diag.m_star;

    return symmetrized(gamma * middle * gamma.transpose());
}

InferenceReport report(const VectorXd& estimate, const MatrixXd& avar, int n, double level) {
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::level, "confidence level must lie in (0, 1)");
    if (avar.rows() != estimate.size() || avar.cols() != estimate.size()) {
        throw Error(ErrorCode::dimension, "covariance does not match the estimate vector");
    }
    InferenceReport rep;
    rep.level = level;
    rep.estimate = estimate;
    const auto k = estimate.size();
    rep.se = (avar.diagonal().array().max(0.0) / static_cast<double>(n)).sqrt().matrix();
    rep.t_stats.resize(k);
    rep.p_values.resize(k);
    const double z = stats::normal_quantile(1.0 - (1.0 - level) / 2.0);
    rep.ci_lower = estimate - z * rep.se;
    rep.ci_upper = estimate + z * rep.se;
    for (Eigen::Index j = 0; j < k; ++j) {
        rep.t_stats(j) = estimate(j) / rep.se(j);
        rep.p_values(j) = std::isnan(rep.t_stats(j)) ? 1.0 : 2.0 * stats::normal_upper_tail(std::abs(rep.t_stats(j)));
        rep.names.push_back("theta[" + std::to_string(j) + "]");
    }
    return rep;
}

InferenceReport report(const JointFit& fit, double level) {
    if (!fit.avar) {
        throw Error(ErrorCode::inference_unavailable, "the fit carries no asymptotic covariance");
    }
    InferenceReport rep = report(fit.estimates(), *fit.avar, fit.n, level);
    const auto p = fit.theta_v.size();
    for (Eigen::Index j = 0; j < rep.estimate.size(); ++j) {
        rep.names[static_cast<std::size_t>(j)] =
            j < p ? "theta_v[" + std::to_string(j) + "]" : "theta_m[" + std::to_string(j - p) + "]";
    }
    return rep;
}

std::vector<std::string> parameter_names(const Dataset& data, const ModelSpec& spec) {
    std::vector<std::string> names;
    for (int j = 0; j < spec.p; ++j) {
        const bool named = spec.var_link.is_linear() && j < static_cast<int>(data.z_v_names.size());
        names.push_back("v:" + (named ? data.z_v_names[static_cast<std::size_t>(j)] : std::to_string(j)));
    }
    for (int j = 0; j < spec.q; ++j) {
        const bool named = spec.mes_link.is_linear() && j < static_cast<int>(data.z_m_names.size());
        names.push_back("m:" + (named ? data.z_m_names[static_cast<std::size_t>(j)] : std::to_string(j)));
    }
    return names;
}

}  // namespace mesreg
