#include "mesreg/quantile_step.hpp"

#include "mesreg/optim.hpp"
#include "mesreg/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace mesreg {

namespace {

constexpr std::array<double, 4> kSmoothingStages{1e-1, 1e-2, 1e-3, 1e-4};

/// Huberized pinball loss of residual r = x - v and its derivative in r.
struct SmoothedPinball {
    double beta;
    double eps;

    [[nodiscard]] double value(double r) const {
        const double a = std::abs(r);
        const double abs_s = a <= eps ? 0.5 * r * r / eps + 0.5 * eps : a;
        return (beta - 0.5) * r + 0.5 * abs_s;
    }
    [[nodiscard]] double derivative(double r) const {
        const double d_abs = std::abs(r) <= eps ? r / eps : (r > 0.0 ? 1.0 : -1.0);
        return (beta - 0.5) + 0.5 * d_abs;
    }
};

double mean_pinball(const VectorXd& x, const VectorXd& v, double beta) {
    double sum = 0.0;
    for (Eigen::Index t = 0; t < x.size(); ++t) sum += pinball_loss(v(t), x(t), beta);
    return sum / static_cast<double>(x.size());
}

/// Residual scale used to express the smoothing parameter in data units.
double residual_scale(const VectorXd& r) {
    const double s = stats::mad(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())));
    if (s > 0.0) return s;
    const double m = r.cwiseAbs().maxCoeff();
    return m > 0.0 ? m : 1.0;
}

optim::Result smoothed_stages(const Dataset& data, const ModelSpec& spec, VectorXd theta, int& iterations) {
    const auto n = static_cast<double>(data.n());
    const double scale = residual_scale(data.x - spec.var_link.evaluate(data.z_v, theta));
    optim::Result res;
    res.x = std::move(theta);
    for (const double stage : kSmoothingStages) {
        const SmoothedPinball loss{spec.beta, stage * scale};
        const optim::Objective objective = [&](const VectorXd& th, VectorXd* grad) {
            const VectorXd r = data.x - spec.var_link.evaluate(data.z_v, th);
            double f = 0.0;
            VectorXd w(r.size());
            for (Eigen::Index t = 0; t < r.size(); ++t) {
                f += loss.value(r(t));
                w(t) = loss.derivative(r(t));
            }
            if (grad != nullptr) {
                *grad = -(spec.var_link.jacobian(data.z_v, th).transpose() * w) / n;
            }
            return f / n;
        };
        res = optim::minimize_bfgs(objective, res.x, {.max_iterations = 400, .gradient_tolerance = 1e-8});
        iterations += res.iterations;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Exact polish for the linear link.

class VertexPolish {
public:
    VertexPolish(const MatrixXd& z, const VectorXd& x, double beta) : z_(z), x_(x), beta_(beta) {}

    /// Walks vertices from the basis nearest to `theta` until no edge descends.
    VectorXd run(const VectorXd& theta, int& pivots) {
        const auto p = z_.cols();
        std::vector<Eigen::Index> basis = initial_basis(theta);
        const Eigen::Index max_pivots = 10000 + 50 * z_.rows();
        VectorXd current(p);
        for (pivots = 0; pivots < max_pivots; ++pivots) {
            const MatrixXd zb = basis_rows(basis);
            const Eigen::FullPivLU<MatrixXd> lu(zb);
            VectorXd xb(p);
            for (Eigen::Index k = 0; k < p; ++k) xb(k) = x_(basis[static_cast<std::size_t>(k)]);
            current = lu.solve(xb);
            residuals(current, basis);

            double best_slope = 0.0;
            Eigen::Index best_k = -1;
            VectorXd best_a;
            for (Eigen::Index k = 0; k < p; ++k) {
                const VectorXd d = lu.solve(VectorXd::Unit(p, k));
                VectorXd a = z_ * d;
                for (const auto b : basis) a(b) = 0.0;
                a(basis[static_cast<std::size_t>(k)]) = 1.0;
                for (const double sign : {1.0, -1.0}) {
                    const VectorXd signed_a = sign * a;
                    const double g = slope(signed_a);
                    if (g < best_slope - tolerance(signed_a)) {
                        best_slope = g;
                        best_k = k;
                        best_a = signed_a;
                    }
                }
            }
            if (best_k < 0) return current;

            const auto entering = line_search(best_a, best_slope).second;
            if (entering < 0) {
                throw ConvergenceError("pinball objective unbounded along an edge", current);
            }
            basis[static_cast<std::size_t>(best_k)] = entering;
        }
        throw ConvergenceError("vertex polish exceeded " + std::to_string(max_pivots) + " pivots", current);
    }

    /// Moves each coordinate to the smallest value with the same objective.
    VectorXd leftmost(VectorXd theta) {
        const auto p = z_.cols();
        for (Eigen::Index j = 0; j < p; ++j) {
            residuals(theta, {});
            const VectorXd a = -z_.col(j);
            const double g = slope(a);
            if (std::abs(g) > tolerance(a)) continue;
            const auto [step, idx] = line_search(a, 0.0);
            if (idx >= 0 && step > 0.0) theta(j) -= step;
        }
        return theta;
    }

    double objective(const VectorXd& theta) const { return mean_pinball(x_, z_ * theta, beta_); }

private:
    std::vector<Eigen::Index> initial_basis(const VectorXd& theta) const {
        const auto p = z_.cols();
        const VectorXd r = x_ - z_ * theta;
        std::vector<Eigen::Index> order(static_cast<std::size_t>(z_.rows()));
        std::iota(order.begin(), order.end(), Eigen::Index{0});
        std::stable_sort(order.begin(), order.end(),
                         [&r](Eigen::Index a, Eigen::Index b) { return std::abs(r(a)) < std::abs(r(b)); });
        std::vector<Eigen::Index> basis;
        for (const auto t : order) {
            basis.push_back(t);
            if (Eigen::FullPivLU<MatrixXd>(basis_rows(basis)).rank() < static_cast<Eigen::Index>(basis.size())) {
                basis.pop_back();
            }
            if (static_cast<Eigen::Index>(basis.size()) == p) return basis;
        }
        throw Error(ErrorCode::singularity, "VaR covariate matrix is rank deficient");
    }

    MatrixXd basis_rows(const std::vector<Eigen::Index>& basis) const {
        MatrixXd out(static_cast<Eigen::Index>(basis.size()), z_.cols());
        for (std::size_t k = 0; k < basis.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = z_.row(basis[k]);
        return out;
    }

    void residuals(const VectorXd& theta, const std::vector<Eigen::Index>& basis) {
        const VectorXd fit = z_ * theta;
        r_ = x_ - fit;
        zero_.assign(static_cast<std::size_t>(r_.size()), 0);
        for (Eigen::Index t = 0; t < r_.size(); ++t) {
            const double scale = std::abs(x_(t)) + std::abs(fit(t)) + 1e-300;
            if (std::abs(r_(t)) <= 1e-12 * scale) {
                r_(t) = 0.0;
                zero_[static_cast<std::size_t>(t)] = 1;
            }
        }
        for (const auto b : basis) {
            r_(b) = 0.0;
            zero_[static_cast<std::size_t>(b)] = 1;
        }
    }

    /// Right derivative of the summed loss along a direction whose effect on v is `a`.
    double slope(const VectorXd& a) const {
        double g = 0.0;
        for (Eigen::Index t = 0; t < a.size(); ++t) {
            const double at = a(t);
            if (at == 0.0) continue;
            if (zero_[static_cast<std::size_t>(t)] != 0) {
                g += std::max((1.0 - beta_) * at, -beta_ * at);
            } else if (r_(t) > 0.0) {
                g -= beta_ * at;
            } else {
                g += (1.0 - beta_) * at;
            }
        }
        return g;
    }

    static double tolerance(const VectorXd& a) { return 1e-12 * a.lpNorm<1>(); }

    /// Exact minimization along the ray; returns (step, index of the point that becomes zero).
    std::pair<double, Eigen::Index> line_search(const VectorXd& a, double slope0) const {
        std::vector<std::pair<double, Eigen::Index>> breaks;
        for (Eigen::Index t = 0; t < a.size(); ++t) {
            if (a(t) == 0.0 || zero_[static_cast<std::size_t>(t)] != 0) continue;
            const double s = r_(t) / a(t);
            if (s > 0.0) breaks.emplace_back(s, t);
        }
        std::sort(breaks.begin(), breaks.end());
        double g = slope0;
        for (const auto& [s, t] : breaks) {
            g += std::abs(a(t));
            if (g >= -tolerance(a)) return {s, t};
        }
        return {0.0, -1};
    }

    const MatrixXd& z_;
    const VectorXd& x_;
    double beta_;
    VectorXd r_;
    std::vector<char> zero_;
};

VectorXd linear_start(const Dataset& data, double beta) {
    const Eigen::ColPivHouseholderQR<MatrixXd> qr(data.z_v);
    VectorXd theta = qr.solve(data.x);
    const VectorXd r = data.x - data.z_v * theta;
    for (Eigen::Index j = 0; j < data.z_v.cols(); ++j) {
        if ((data.z_v.col(j).array() == 1.0).all()) {
            theta(j) += stats::quantile_type1(std::span<const double>(r.data(), static_cast<std::size_t>(r.size())), beta);
            break;
        }
    }
    return theta;
}

// ---------------------------------------------------------------------------
// Nonlinear links

/// Coordinate-wise pattern search on the exact objective.
VectorXd coordinate_polish(const Dataset& data, const ModelSpec& spec, VectorXd theta) {
    const auto f = [&](const VectorXd& th) { return var_objective(data, spec, th); };
    double best = f(theta);
    for (int pass = 0; pass < 3; ++pass) {
        for (Eigen::Index j = 0; j < theta.size(); ++j) {
            double radius = 1e-2 * (1.0 + std::abs(theta(j)));
            for (int level = 0; level < 5; ++level) {
                const double center = theta(j);
                for (int k = -20; k <= 20; ++k) {
                    VectorXd trial = theta;
                    trial(j) = center + radius * k / 20.0;
                    const double value = f(trial);
                    if (value < best) {
                        best = value;
                        theta = trial;
                    }
                }
                radius /= 10.0;
            }
        }
    }
    return theta;
}

std::vector<VectorXd> multistart_points(const VectorXd& start) {
    std::vector<VectorXd> starts{start};
    for (int k = 0; k < 4; ++k) {
        VectorXd s = start;
        for (Eigen::Index j = 0; j < s.size(); ++j) {
            // Patterns (+,+,..), (-,-,..), (+,-,..), (-,+,..).
            double sign = (k % 2 == 0) ? 1.0 : -1.0;
            if (k >= 2 && j % 2 == 1) sign = -sign;
            s(j) += sign * 0.1 * std::max(std::abs(start(j)), 1.0);
        }
        starts.push_back(std::move(s));
    }
    return starts;
}

VarFit finish(const Dataset& data, const ModelSpec& spec, VectorXd theta) {
    VarFit fit;
    fit.theta_v = std::move(theta);
    fit.fitted = predict_var(fit.theta_v, data.z_v, spec.var_link);
    const Eigen::ArrayXd gap = data.x.array() - fit.fitted.array();
    const Mask tie = gap.abs() <= kTieTolerance * data.x.array().abs().max(1.0);
    fit.exceed_mask = (gap > 0.0) && !tie;
    fit.ties = static_cast<int>(tie.count());
    fit.final_loss = mean_pinball(data.x, fit.fitted, spec.beta);
    return fit;
}

}  // namespace

double pinball_loss(double v, double x, double beta) {
    return ((x <= v ? 1.0 : 0.0) - beta) * (v - x);
}

double var_objective(const Dataset& data, const ModelSpec& spec, const VectorXd& theta) {
    return mean_pinball(data.x, spec.var_link.evaluate(data.z_v, theta), spec.beta);
}

VectorXd predict_var(const VectorXd& theta_v, const MatrixXd& z_v, const Link& link) {
    return link.evaluate(z_v, theta_v);
}

VarFit fit_var(const Dataset& data, const ModelSpec& spec) {
    validate(data, spec);

    if (spec.var_link.is_linear()) {
        if (Eigen::ColPivHouseholderQR<MatrixXd>(data.z_v).rank() < data.z_v.cols()) {
            throw Error(ErrorCode::singularity, "VaR covariate matrix is rank deficient");
        }
        int iterations = 0;
        const auto smooth = smoothed_stages(data, spec, linear_start(data, spec.beta), iterations);
        VertexPolish polish(data.z_v, data.x, spec.beta);
        int pivots = 0;
        VectorXd theta = polish.run(smooth.x, pivots);
        theta = polish.leftmost(std::move(theta));
        VarFit fit = finish(data, spec, std::move(theta));
        fit.iterations = iterations + pivots;
        fit.converged = true;
        return fit;
    }

    std::optional<VarFit> best;
    std::vector<double> objectives;
    int iterations = 0;
    VectorXd last = spec.var_link.start();
    for (const auto& start : multistart_points(spec.var_link.start())) {
        const auto smooth = smoothed_stages(data, spec, start, iterations);
        last = smooth.x;
        if (!std::isfinite(smooth.value)) continue;
        VarFit fit = finish(data, spec, coordinate_polish(data, spec, smooth.x));
        fit.converged = smooth.converged || smooth.stalled;
        objectives.push_back(fit.final_loss);
        if (!best || fit.final_loss < best->final_loss) best = std::move(fit);
    }
    if (!best) {
        throw ConvergenceError("no multistart run of the VaR step produced a finite objective", last);
    }
    if (!best->converged) {
        throw ConvergenceError("VaR step reached the iteration limit", best->theta_v);
    }
    const auto [lo, hi] = std::minmax_element(objectives.begin(), objectives.end());
    best->multistart_disagreement = (*hi - *lo) > 1e-4;
    best->iterations = iterations;
    return *best;
}

}  // namespace mesreg
