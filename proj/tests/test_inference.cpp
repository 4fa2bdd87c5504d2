#include "mesreg/inference.hpp"
#include "mesreg/simulation.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <vector>

using namespace mesreg;

namespace {

Dataset dgp_sample(int n, std::uint64_t seed) {
    SimConfig config;
    config.n = n;
    auto rng = replication_rng(seed, 0);
    return simulate_dgp(config, rng);
}

struct Fitted {
    Dataset data;
    ModelSpec spec;
    VarFit var;
    MesFit mes;
    Bandwidth bw;
};

Fitted fitted(int n, std::uint64_t seed) {
    Fitted f{dgp_sample(n, seed), {}, {}, {}, {}};
    f.spec = ModelSpec::linear(0.9, f.data);
    f.var = fit_var(f.data, f.spec);
    f.mes = fit_mes(f.data, f.spec, f.var);
    f.bw = bandwidth(f.data.x - f.var.fitted, 0.9);
    return f;
}

double rel_asym(const MatrixXd& a) { return (a - a.transpose()).norm() / std::max(a.norm(), 1e-300); }

}  // namespace

TEST(Bandwidth, MatchesFormulaWithReferenceQuantiles) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    VectorXd r(1000);
    for (auto& v : r) v = normal(rng);
    const auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    };
    const double center = median({r.begin(), r.end()});
    std::vector<double> dev;
    for (const double v : r) dev.push_back(std::abs(v - center));
    const Bandwidth bw = bandwidth(r, 0.9);
    EXPECT_DOUBLE_EQ(bw.mad, median(dev));
    EXPECT_NEAR(bw.c_n, oracle::bandwidth(bw.mad, 1000, 0.9), 1e-12);
    // Recomputable from the stored fields.
    EXPECT_NEAR(bw.c_n, bw.mad * (oracle::normal_quantile(0.9 + bw.m) - oracle::normal_quantile(0.9 - bw.m)), 1e-12);
    EXPECT_GT(bw.m, 0.0);
    EXPECT_LT(bw.m, 0.1);
}

TEST(Bandwidth, LinearInMad) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> normal;
    VectorXd r(500);
    for (auto& v : r) v = normal(rng);
    const Bandwidth a = bandwidth(r, 0.95);
    const Bandwidth b = bandwidth(2.0 * r, 0.95);
    EXPECT_EQ(b.mad, 2.0 * a.mad);
    EXPECT_EQ(b.c_n, 2.0 * a.c_n);
}

TEST(Bandwidth, DegenerateResiduals) {
    try {
        bandwidth(VectorXd::Constant(50, 0.3), 0.9);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::degenerate_bandwidth);
    }
}

TEST(Bandwidth, LevelTooCloseToBoundary) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> normal;
    VectorXd r(10);
    for (auto& v : r) v = normal(rng);
    try {
        bandwidth(r, 0.995);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::level);
        EXPECT_NE(std::string(e.what()).find("larger"), std::string::npos);
    }
}

TEST(EstimateMatrices, InterceptOnlyScalars) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> normal;
    VectorXd x(400), y(400);
    for (int t = 0; t < 400; ++t) {
        x(t) = normal(rng);
        y(t) = x(t) + normal(rng);
    }
    Dataset d = make_dataset(y, x, MatrixXd::Ones(400, 1), MatrixXd::Ones(400, 1));
    d.intercept_v = d.intercept_m = true;
    const ModelSpec spec = ModelSpec::linear(0.9, d);
    const VarFit var = fit_var(d, spec);
    const MesFit mes = fit_mes(d, spec, var);
    const FitDiagnostics diag = estimate_matrices(d, spec, var, mes, bandwidth(x - var.fitted, 0.9));
    EXPECT_NEAR(diag.v(0, 0), 0.09, 1e-15);
    EXPECT_NEAR(diag.lambda1(0, 0), 0.1, 1e-15);
}

TEST(EstimateMatrices, MatchesDirectSums) {
    const Fitted f = fitted(800, 4);
    const FitDiagnostics diag = estimate_matrices(f.data, f.spec, f.var, f.mes, f.bw);
    const auto ref = oracle::plug_ins(f.data.y, f.data.x, f.data.z_v, f.data.z_m, f.var.fitted, f.mes.fitted, 0.9,
                                      f.bw.c_n);
    EXPECT_LE((diag.v - ref.v).norm(), 1e-12 * ref.v.norm());
    EXPECT_LE((diag.lambda - ref.lambda).norm(), 1e-12 * ref.lambda.norm());
    EXPECT_LE((diag.m_star - ref.m_star).norm(), 1e-12 * ref.m_star.norm());
    EXPECT_LE((diag.lambda1 - ref.lambda1).norm(), 1e-12 * ref.lambda1.norm());
    EXPECT_LE((diag.lambda2 - ref.lambda2).norm(), 1e-12 * ref.lambda2.norm());
    EXPECT_GT(diag.kernel_count, 0);
    for (const MatrixXd* m : {&diag.v, &diag.lambda, &diag.m_star, &diag.lambda1}) {
        EXPECT_LE(rel_asym(*m), 1e-12);
    }
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(diag.v).eigenvalues().minCoeff(), -1e-12);
    EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(diag.m_star).eigenvalues().minCoeff(),
              -1e-12 * diag.m_star.trace());
}

TEST(EstimateMatrices, EmptyKernelWindow) {
    const Fitted f = fitted(300, 5);
    // A VaR path far above every observation leaves the window empty.
    VarFit moved = f.var;
    moved.fitted.array() += 1e6;
    const FitDiagnostics diag = estimate_matrices(f.data, f.spec, moved, f.mes, f.bw);
    EXPECT_EQ(diag.kernel_count, 0);
    EXPECT_TRUE((diag.lambda.array() == 0.0).all());
    EXPECT_TRUE(std::isinf(diag.cond_lambda));
    try {
        sandwich(diag);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::singularity);
        EXPECT_NE(std::string(e.what()).find("Lambda"), std::string::npos);
    }
}

TEST(Sandwich, ZeroCrossMatrixDecouples) {
    const Fitted f = fitted(1000, 6);
    FitDiagnostics diag = estimate_matrices(f.data, f.spec, f.var, f.mes, f.bw);
    diag.lambda2.setZero();
    const MatrixXd avar = sandwich(diag);
    EXPECT_TRUE((avar.topRightCorner(3, 3).array() == 0.0).all());
    EXPECT_TRUE((avar.bottomLeftCorner(3, 3).array() == 0.0).all());
    const MatrixXd l1inv = diag.lambda1.inverse();
    const MatrixXd expected = l1inv * diag.m_star * l1inv;
    EXPECT_LE((avar.bottomRightCorner(3, 3) - expected).norm(), 1e-10 * expected.norm());
}

TEST(Sandwich, ScalarCaseMatchesHandAlgebra) {
    FitDiagnostics diag;
    diag.v = MatrixXd::Constant(1, 1, 0.09);
    diag.lambda = MatrixXd::Constant(1, 1, 0.37);
    diag.m_star = MatrixXd::Constant(1, 1, 0.8);
    diag.lambda1 = MatrixXd::Constant(1, 1, 0.1);
    diag.lambda2 = MatrixXd::Constant(1, 1, -0.23);
    diag.cond_lambda = diag.cond_lambda1 = 1.0;
    const MatrixXd avar = sandwich(diag);
    const Eigen::Matrix2d ref = oracle::scalar_sandwich(0.09, 0.37, 0.8, 0.1, -0.23);
    EXPECT_LE((avar - ref).cwiseAbs().maxCoeff(), 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST(Sandwich, SymmetricPsdOnSimulatedFits) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Fitted f = fitted(1000, seed);
        const MatrixXd avar = sandwich(estimate_matrices(f.data, f.spec, f.var, f.mes, f.bw));
        EXPECT_LE(rel_asym(avar), 1e-12);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<MatrixXd>(avar).eigenvalues().minCoeff(), -1e-8 * avar.trace());
    }
}

TEST(Sandwich, SingularLambda1NamesBlock) {
    FitDiagnostics diag;
    diag.v = diag.lambda = MatrixXd::Identity(1, 1);
    diag.m_star = MatrixXd::Identity(2, 2);
    diag.lambda1 = MatrixXd::Ones(2, 2);
    diag.lambda2 = MatrixXd::Zero(2, 1);
    diag.cond_lambda = 1.0;
    diag.cond_lambda1 = std::numeric_limits<double>::infinity();
    try {
        sandwich(diag);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::singularity);
        EXPECT_NE(std::string(e.what()).find("Lambda1"), std::string::npos);
    }
}

TEST(Report, NormalArithmetic) {
    const InferenceReport rep = report(VectorXd::Constant(1, 1.0), MatrixXd::Constant(1, 1, 0.25 * 100), 100);
    EXPECT_DOUBLE_EQ(rep.se(0), 0.5);
    EXPECT_DOUBLE_EQ(rep.t_stats(0), 2.0);
    EXPECT_NEAR(rep.p_values(0), 0.0455, 5e-5);
    EXPECT_NEAR(rep.p_values(0), 2.0 * (1.0 - oracle::normal_cdf(2.0)), 1e-14);
    EXPECT_NEAR(rep.ci_upper(0) - 1.0, 1.959964 * 0.5, 1e-6);
    EXPECT_NEAR(1.0 - rep.ci_lower(0), 1.959964 * 0.5, 1e-6);
}

TEST(Report, OrderingAndMonotonePValues) {
    const Fitted f = fitted(800, 7);
    const JointFit fit = complete_fit(f.data, f.spec, f.var, f.mes);
    for (const double level : {0.8, 0.95, 0.99}) {
        const InferenceReport rep = report(fit, level);
        for (Eigen::Index j = 0; j < 6; ++j) {
            EXPECT_LE(rep.ci_lower(j), rep.estimate(j));
            EXPECT_LE(rep.estimate(j), rep.ci_upper(j));
            EXPECT_GE(rep.p_values(j), 0.0);
            EXPECT_LE(rep.p_values(j), 1.0);
        }
    }
    double previous = 1.0;
    for (const double t : {0.0, 0.5, 1.0, 2.0, 4.0, 8.0}) {
        const InferenceReport rep = report(VectorXd::Constant(1, t), MatrixXd::Identity(1, 1), 1);
        EXPECT_LE(rep.p_values(0), previous);
        previous = rep.p_values(0);
    }
}

TEST(Report, MissingCovariance) {
    JointFit fit;
    fit.theta_v = VectorXd::Zero(1);
    fit.theta_m = VectorXd::Zero(1);
    try {
        report(fit);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::inference_unavailable);
    }
}

TEST(Inference, ScaleEquivariance) {
    Fitted f = fitted(1500, 8);
    const FitDiagnostics base = estimate_matrices(f.data, f.spec, f.var, f.mes, f.bw);
    const double c = 3.0;
    Dataset scaled = f.data;
    scaled.x *= c;
    VarFit var = f.var;
    var.theta_v *= c;
    var.fitted *= c;
    const Bandwidth bw = bandwidth(scaled.x - var.fitted, 0.9);
    EXPECT_NEAR(bw.c_n, c * f.bw.c_n, 1e-12 * c * f.bw.c_n);
    const FitDiagnostics diag = estimate_matrices(scaled, f.spec, var, f.mes, bw);
    EXPECT_LE((c * diag.lambda - base.lambda).norm(), 1e-8 * base.lambda.norm());
}

TEST(Inference, KernelWindowNonEmptyOnSimulatedData) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Fitted f = fitted(100, seed);
        EXPECT_GT(estimate_matrices(f.data, f.spec, f.var, f.mes, f.bw).kernel_count, 0);
    }
}

TEST(Inference, ParameterNames) {
    const Fitted f = fitted(100, 9);
    EXPECT_EQ(parameter_names(f.data, f.spec),
              (std::vector<std::string>{"v:const", "v:z1", "v:z2", "m:const", "m:z1", "m:z2"}));
}
