#include "mesreg/mes_step.hpp"

#include "mesreg/inference.hpp"
#include "mesreg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

namespace mesreg {

namespace {

bool is_intercept_only(const MatrixXd& z) { return z.cols() == 1 && (z.col(0).array() == 1.0).all(); }

MatrixXd exceedance_rows(const MatrixXd& z, const Mask& mask, int count) {
    MatrixXd out(count, z.cols());
    Eigen::Index k = 0;
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
        if (mask(t)) out.row(k++) = z.row(t);
    }
    return out;
}

VectorXd exceedance_values(const VectorXd& v, const Mask& mask, int count) {
    VectorXd out(count);
    Eigen::Index k = 0;
    for (Eigen::Index t = 0; t < v.size(); ++t) {
        if (mask(t)) out(k++) = v(t);
    }
    return out;
}

VectorXd linear_mes(const Dataset& data, const Mask& mask, int n_exceed) {
    if (is_intercept_only(data.z_m)) {
        double sum = 0.0;
        for (Eigen::Index t = 0; t < data.y.size(); ++t) {
            if (mask(t)) sum += data.y(t);
        }
        return VectorXd::Constant(1, sum / n_exceed);
    }
    const MatrixXd ze = exceedance_rows(data.z_m, mask, n_exceed);
    const VectorXd ye = exceedance_values(data.y, mask, n_exceed);
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(ze);
    if (qr.rank() < ze.cols()) {
        throw Error(ErrorCode::singularity, "MES covariates on the exceedance subsample are rank deficient (rank " +
                                                std::to_string(qr.rank()) + " < " + std::to_string(ze.cols()) + ")");
    }
    return qr.solve(ye);
}

struct NonlinearResult {
    VectorXd theta;
    bool converged = false;
    bool disagreement = false;
};

NonlinearResult nonlinear_mes(const Dataset& data, const ModelSpec& spec, const Mask& mask) {
    const auto n = static_cast<double>(data.n());
    const Link& link = spec.mes_link;
    const optim::Objective objective = [&](const VectorXd& th, VectorXd* grad) {
        const VectorXd m = link.evaluate(data.z_m, th);
        VectorXd w = VectorXd::Zero(m.size());
        double f = 0.0;
        for (Eigen::Index t = 0; t < m.size(); ++t) {
            if (!mask(t)) continue;
            const double e = data.y(t) - m(t);
            f += 0.5 * e * e;
            w(t) = e;
        }
        if (grad != nullptr) *grad = -(link.jacobian(data.z_m, th).transpose() * w) / n;
        return f / n;
    };

    // Gauss-Newton step from the user start: least squares on the linearized link.
    const auto linearized = [&](const VectorXd& start) -> VectorXd {
        const MatrixXd jac = link.jacobian(data.z_m, start);
        const VectorXd m = link.evaluate(data.z_m, start);
        const int count = static_cast<int>(mask.count());
        const MatrixXd je = exceedance_rows(jac, mask, count);
        const VectorXd re = exceedance_values(data.y - m, mask, count);
        const Eigen::ColPivHouseholderQR<MatrixXd> qr(je);
        if (qr.rank() < je.cols()) return start;
        const VectorXd candidate = start + qr.solve(re);
        return objective(candidate, nullptr) < objective(start, nullptr) ? candidate : start;
    };

    const VectorXd& start = link.start();
    std::vector<VectorXd> starts{linearized(start)};
    for (int k = 0; k < 4; ++k) {
        VectorXd s = start;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            double sign = (k % 2 == 0) ? 1.0 : -1.0;
            if (k >= 2 && j % 2 == 1) sign = -sign;
            s(j) += sign * 0.1 * std::max(std::abs(start(j)), 1.0);
        }
        starts.push_back(std::move(s));
    }

    std::optional<optim::Result> best;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const auto& s : starts) {
        auto res = optim::minimize_bfgs(objective, s, {.max_iterations = 1000, .gradient_tolerance = 1e-8});
        if (!std::isfinite(res.value)) continue;
        lo = std::min(lo, res.value);
        hi = std::max(hi, res.value);
        if (!best || res.value < best->value) best = std::move(res);
    }
    if (!best) throw ConvergenceError("no multistart run of the MES step produced a finite objective", start);
    return {best->x, best->converged || best->stalled, (hi - lo) > 1e-4};
}

}  // namespace

double mes_objective(const Dataset& data, const ModelSpec& spec, const Mask& mask, const VectorXd& theta) {
    const VectorXd m = spec.mes_link.evaluate(data.z_m, theta);
    double f = 0.0;
    for (Eigen::Index t = 0; t < m.size(); ++t) {
        if (!mask(t)) continue;
        const double e = data.y(t) - m(t);
        f += 0.5 * e * e;
    }
    return f / static_cast<double>(data.n());
}

MesFit fit_mes(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit) {
    if (var_fit.exceed_mask.size() != data.n()) {
        throw Error(ErrorCode::dimension, "VaR fit does not belong to this dataset");
    }
    MesFit fit;
    fit.n_exceed = static_cast<int>(var_fit.exceed_mask.count());
    if (fit.n_exceed < spec.q) {
        throw Error(ErrorCode::insufficient_exceedances, std::to_string(fit.n_exceed) +
                                                             " VaR exceedances, at least q = " +
                                                             std::to_string(spec.q) + " needed");
    }
    if (spec.mes_link.is_linear()) {
        fit.theta_m = linear_mes(data, var_fit.exceed_mask, fit.n_exceed);
        fit.converged = true;
    } else {
        auto res = nonlinear_mes(data, spec, var_fit.exceed_mask);
        fit.theta_m = std::move(res.theta);
        fit.converged = res.converged;
        fit.multistart_disagreement = res.disagreement;
    }
    fit.fitted = spec.mes_link.evaluate(data.z_m, fit.theta_m);
    fit.final_loss = mes_objective(data, spec, var_fit.exceed_mask, fit.theta_m);
    return fit;
}

int min_exceedances_for_inference(int q) { return std::max(q, 5); }

JointFit complete_fit(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit, const MesFit& mes_fit,
                      const CrossMatrix& cross) {
    JointFit fit;
    fit.theta_v = var_fit.theta_v;
    fit.theta_m = mes_fit.theta_m;
    fit.n = data.n();
    fit.exceedance_count = mes_fit.n_exceed;
    fit.ties = var_fit.ties;
    fit.converged = var_fit.converged && mes_fit.converged;
    fit.loss_values = {var_fit.final_loss, mes_fit.final_loss};
    if (var_fit.multistart_disagreement) fit.warnings.emplace_back("VaR multistart runs disagree by more than 1e-4");
    if (mes_fit.multistart_disagreement) fit.warnings.emplace_back("MES multistart runs disagree by more than 1e-4");

    if (mes_fit.n_exceed < min_exceedances_for_inference(spec.q)) {
        fit.warnings.emplace_back("inference skipped: " + std::to_string(mes_fit.n_exceed) +
                                  " exceedances, at least " + std::to_string(min_exceedances_for_inference(spec.q)) +
                                  " required");
        return fit;
    }
    try {
        const Bandwidth bw = bandwidth(data.x - var_fit.fitted, spec.beta);
        fit.bandwidth = bw.c_n;
        FitDiagnostics diag = estimate_matrices(data, spec, var_fit, mes_fit, bw);
        if (cross) diag.lambda2 = cross(data, spec, var_fit, mes_fit, bw.c_n);
        fit.diagnostics = diag;
        const MatrixXd avar = sandwich(diag);
        fit.se = (avar.diagonal().array().max(0.0) / static_cast<double>(fit.n)).sqrt().matrix();
        fit.avar = avar;
    } catch (const Error& e) {
        fit.warnings.emplace_back(std::string("inference unavailable: ") + e.what());
    }
    return fit;
}

JointFit fit_joint(const Dataset& data, const ModelSpec& spec) {
    const VarFit var_fit = fit_var(data, spec);
    const MesFit mes_fit = fit_mes(data, spec, var_fit);
    return complete_fit(data, spec, var_fit, mes_fit);
}

}  // namespace mesreg
