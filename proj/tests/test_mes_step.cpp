#include "mesreg/mes_step.hpp"
#include "mesreg/simulation.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace mesreg;

namespace {

Dataset dgp_sample(int n, std::uint64_t seed, double beta = 0.9) {
    SimConfig config;
    config.n = n;
    config.beta = beta;
    auto rng = replication_rng(seed, 0);
    return simulate_dgp(config, rng);
}

VarFit fixed_var(const Dataset& d, double level) {
    VarFit v;
    v.theta_v = VectorXd::Constant(1, level);
    v.fitted = VectorXd::Constant(d.n(), level);
    v.exceed_mask = d.x.array() > level;
    return v;
}

Dataset intercept_only(const VectorXd& y, const VectorXd& x) {
    Dataset d = make_dataset(y, x, MatrixXd::Ones(x.size(), 1), MatrixXd::Ones(x.size(), 1));
    d.intercept_v = d.intercept_m = true;
    return d;
}

}  // namespace

TEST(FitMes, InterceptOnlySubsampleMean) {
    const Dataset d = intercept_only(VectorXd{{10, 20, 30, 40, 50}}, VectorXd{{1, 2, 3, 4, 5}});
    const MesFit fit = fit_mes(d, ModelSpec::linear(0.9, d), fixed_var(d, 3.0));
    EXPECT_EQ(fit.theta_m(0), 45.0);
    EXPECT_EQ(fit.n_exceed, 2);
    EXPECT_DOUBLE_EQ(fit.final_loss, 0.5 * (25.0 + 25.0) / 5.0);
}

TEST(FitMes, NoExceedancesIsError) {
    const Dataset d = intercept_only(VectorXd{{10, 20, 30, 40, 50}}, VectorXd{{1, 2, 3, 4, 5}});
    try {
        fit_mes(d, ModelSpec::linear(0.9, d), fixed_var(d, 10.0));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::insufficient_exceedances);
    }
}

TEST(FitMes, SingularSubsampleDesign) {
    Dataset d = dgp_sample(200, 2);
    const ModelSpec spec = ModelSpec::linear(0.9, d);
    const VarFit var = fit_var(d, spec);
    for (Eigen::Index t = 0; t < d.n(); ++t) {
        if (var.exceed_mask(t)) d.z_m(t, 2) = 0.0;
    }
    try {
        fit_mes(d, spec, var);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::singularity);
    }
}

TEST(FitMes, MatchesGridOracle) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const Dataset d = dgp_sample(60, seed);
        const ModelSpec spec = ModelSpec::linear(0.9, d);
        const VarFit var = fit_var(d, spec);
        const MesFit fit = fit_mes(d, spec, var);
        // The slack keeps observations interpolated by the VaR fit out of the oracle mask.
        const VectorXd ref = oracle::mes_grid(d.y, d.x, d.z_m, var.fitted, 1e-8, VectorXd::Zero(3), 50.0);
        EXPECT_LE((fit.theta_m - ref).lpNorm<Eigen::Infinity>(), 1e-3) << "seed " << seed;
    }
}

TEST(FitMes, NormalEquationResidual) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> normal;
    for (int instance = 0; instance < 25; ++instance) {
        const int n = 80;
        MatrixXd z(n, 3);
        VectorXd y(n), x(n);
        for (int t = 0; t < n; ++t) {
            z.row(t) << 1.0, normal(rng), normal(rng);
            x(t) = normal(rng);
            y(t) = 3.0 * normal(rng) + x(t);
        }
        Dataset d = make_dataset(y, x, z, z);
        d.intercept_v = d.intercept_m = true;
        const ModelSpec spec = ModelSpec::linear(0.7, d);
        const VarFit var = fit_var(d, spec);
        const MesFit fit = fit_mes(d, spec, var);
        VectorXd grad = VectorXd::Zero(3);
        for (int t = 0; t < n; ++t) {
            if (var.exceed_mask(t)) grad += z.row(t).transpose() * (y(t) - z.row(t).dot(fit.theta_m));
        }
        EXPECT_LE(grad.norm(), 1e-8 * (1.0 + y.norm()));
    }
}

TEST(FitMes, AffineEquivariance) {
    Dataset d = dgp_sample(500, 5);
    const ModelSpec spec = ModelSpec::linear(0.9, d);
    const VarFit var = fit_var(d, spec);
    const MesFit base = fit_mes(d, spec, var);
    d.y = 2.0 * d.y.array() + 7.0;
    const MesFit mapped = fit_mes(d, spec, var);
    VectorXd expected = 2.0 * base.theta_m;
    expected(0) += 7.0;
    EXPECT_LE((mapped.theta_m - expected).lpNorm<Eigen::Infinity>(), 1e-10);
}

TEST(FitMes, ObjectiveAndLossInvariant) {
    const Dataset d = dgp_sample(300, 6);
    const ModelSpec spec = ModelSpec::linear(0.9, d);
    const VarFit var = fit_var(d, spec);
    const MesFit fit = fit_mes(d, spec, var);
    double loss = 0.0;
    for (Eigen::Index t = 0; t < d.n(); ++t) {
        if (var.exceed_mask(t)) loss += 0.5 * (d.y(t) - fit.fitted(t)) * (d.y(t) - fit.fitted(t));
    }
    EXPECT_EQ(fit.final_loss, mes_objective(d, spec, var.exceed_mask, fit.theta_m));
    EXPECT_NEAR(fit.final_loss, loss / d.n(), 1e-14);
    EXPECT_LE(fit.final_loss, mes_objective(d, spec, var.exceed_mask, VectorXd::Zero(3)));
    EXPECT_EQ(fit.n_exceed, var.exceedances());
}

TEST(FitMes, NonlinearLinkMatchesLinearSolution) {
    const Dataset d = dgp_sample(400, 7);
    const ModelSpec linear = ModelSpec::linear(0.9, d);
    const VarFit var = fit_var(d, linear);
    const MesFit ref = fit_mes(d, linear, var);
    ModelSpec custom = linear;
    custom.mes_link = Link::custom(
        3, [](const VectorXd& z, const VectorXd& th) { return z.dot(th); },
        [](const VectorXd& z, const VectorXd&) { return z; }, VectorXd::Zero(3));
    const MesFit fit = fit_mes(d, custom, var);
    EXPECT_LE((fit.theta_m - ref.theta_m).lpNorm<Eigen::Infinity>(), 1e-5);
    EXPECT_TRUE(fit.converged);
}

TEST(FitJoint, KeepsStandaloneVarFit) {
    const Dataset d = dgp_sample(500, 8);
    const ModelSpec spec = ModelSpec::linear(0.9, d);
    const JointFit joint = fit_joint(d, spec);
    const VarFit var = fit_var(d, spec);
    EXPECT_TRUE((joint.theta_v.array() == var.theta_v.array()).all());
    EXPECT_TRUE(joint.has_inference());
    EXPECT_EQ(joint.se->size(), 6);
    EXPECT_EQ(joint.exceedance_count, var.exceedances());
    EXPECT_EQ(joint.loss_values.first, var.final_loss);
}

TEST(FitJoint, EsSpecialCaseInterceptOnly) {
    std::mt19937_64 rng(9);
    std::student_t_distribution<double> t5(5.0);
    VectorXd x(300);
    for (auto& v : x) v = t5(rng);
    const Dataset d = intercept_only(x, x);
    const JointFit fit = fit_joint(d, ModelSpec::linear(0.9, d));
    double sum = 0.0;
    int count = 0;
    for (const double v : x) {
        if (v > fit.theta_v(0)) {
            sum += v;
            ++count;
        }
    }
    EXPECT_EQ(fit.theta_m(0), sum / count);
}

TEST(FitJoint, FewExceedancesSkipInference) {
    VectorXd x(40);
    for (int t = 0; t < 40; ++t) x(t) = t;
    const Dataset d = intercept_only(x, x);
    const JointFit fit = fit_joint(d, ModelSpec::linear(0.95, d));
    EXPECT_EQ(fit.exceedance_count, 2);
    EXPECT_FALSE(fit.has_inference());
    ASSERT_FALSE(fit.warnings.empty());
    EXPECT_NE(fit.warnings.front().find("exceedances"), std::string::npos);
}

TEST(FitJoint, SlopesWithinThreeStandardErrors) {
    // n = 4000 draws; slopes of both parts within 3 reported SEs of the truth.
    SimConfig config;
    config.n = 4000;
    const TrueParams truth = true_params(config);
    VectorXd theta0(6);
    theta0 << truth.theta_v0, truth.theta_m0;
    const int reps = 200;
    int inside = 0, total = 0;
    for (int r = 0; r < reps; ++r) {
        auto rng = replication_rng(777, static_cast<std::uint64_t>(r));
        const Dataset d = simulate_dgp(config, rng);
        const JointFit fit = fit_joint(d, ModelSpec::linear(0.9, d));
        ASSERT_TRUE(fit.has_inference());
        bool all = true;
        for (const Eigen::Index j : {1, 2, 4, 5}) {
            all = all && std::abs(fit.estimates()(j) - theta0(j)) <= 3.0 * (*fit.se)(j);
        }
        inside += all ? 1 : 0;
        ++total;
    }
    const double share = static_cast<double>(inside) / total;
    RecordProperty("replications_within_3se", std::to_string(share));
    EXPECT_GE(share, 0.99);
}
