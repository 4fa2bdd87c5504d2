#include "mesreg/es_regression.hpp"

#include <cmath>

namespace mesreg {

namespace {

EsFit from_joint(JointFit joint) {
    EsFit fit;
    fit.theta_v = std::move(joint.theta_v);
    fit.theta_e = std::move(joint.theta_m);
    fit.avar = std::move(joint.avar);
    fit.se = std::move(joint.se);
    fit.bandwidth = joint.bandwidth;
    fit.diagnostics = std::move(joint.diagnostics);
    fit.n = joint.n;
    fit.exceedance_count = joint.exceedance_count;
    fit.converged = joint.converged;
    fit.warnings = std::move(joint.warnings);
    return fit;
}

}  // namespace

VectorXd EsFit::estimates() const {
    VectorXd out(theta_v.size() + theta_e.size());
    out << theta_v, theta_e;
    return out;
}

MatrixXd lambda2_es(const Dataset& data, const ModelSpec& spec, const VarFit& var_fit, const MesFit& es_fit,
                    double c_n) {
    const MatrixXd grad_v = spec.var_link.jacobian(data.z_v, var_fit.theta_v);
    const MatrixXd grad_m = spec.mes_link.jacobian(data.z_m, es_fit.theta_m);
    VectorXd weight = VectorXd::Zero(data.n());
    for (Eigen::Index t = 0; t < data.n(); ++t) {
        if (std::abs(data.x(t) - var_fit.fitted(t)) < c_n) {
            weight(t) = (var_fit.fitted(t) - es_fit.fitted(t)) / (2.0 * c_n);
        }
    }
    return grad_m.transpose() * weight.asDiagonal() * grad_v / static_cast<double>(data.n());
}

Dataset es_dataset(Dataset data) {
    data.y = data.x;
    return data;
}

EsFit fit_es(Dataset data, const ModelSpec& spec) {
    data = es_dataset(std::move(data));
    validate(data, spec);
    const VarFit var_fit = fit_var(data, spec);
    const MesFit es_fit = fit_mes(data, spec, var_fit);
    return from_joint(complete_fit(data, spec, var_fit, es_fit, lambda2_es));
}

EsFit fit_es(const VectorXd& x, const MatrixXd& z_v, const MatrixXd& z_e, double beta) {
    Dataset data = make_dataset(x, x, z_v, z_e);
    return fit_es(std::move(data), ModelSpec::linear(beta, data));
}

Decomposition decompose(const VectorXd& x, const MatrixXd& components, const MatrixXd& weights, const MatrixXd& z_v,
                        const MatrixXd& z_m, double beta) {
    const auto n = x.size();
    if (components.rows() != n || weights.rows() != n || weights.cols() != components.cols()) {
        throw Error(ErrorCode::dimension, "components and weights must be n x D with matching D");
    }
    if (components.cols() < 1) throw Error(ErrorCode::dimension, "at least one component is required");

    const Dataset es_data = make_dataset(x, x, z_v, z_m);
    const ModelSpec spec = ModelSpec::linear(beta, es_data);
    validate(es_data, spec);
    const VarFit var_fit = fit_var(es_data, spec);
    const MesFit es_fit = fit_mes(es_data, spec, var_fit);

    Decomposition out;
    out.es = from_joint(complete_fit(es_data, spec, var_fit, es_fit, lambda2_es));
    out.mean_weights = weights.colwise().mean().transpose();
    out.weighted_sum = VectorXd::Zero(out.es.theta_e.size());
    for (Eigen::Index d = 0; d < components.cols(); ++d) {
        Dataset component = es_data;
        component.y = components.col(d);
        validate(component, spec);
        const MesFit mes_fit = fit_mes(component, spec, var_fit);
        out.components.push_back(complete_fit(component, spec, var_fit, mes_fit));
        out.weighted_sum += out.mean_weights(d) * mes_fit.theta_m;
    }
    out.residual = out.es.theta_e - out.weighted_sum;
    return out;
}

}  // namespace mesreg
