#pragma once

#include "mesreg/data_model.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mesreg {

struct SimConfig {
    Eigen::Matrix<double, 5, 1> gamma{1.0, 1.5, 2.0, 0.25, 0.5};
    Eigen::Matrix2d sigma{{1.0, 1.2}, {1.2, 4.0}};
    double df = 6.0;
    int n = 2000;
    int m_reps = 500;
    double beta = 0.9;
    std::uint64_t seed = 1;
};

struct TrueParams {
    Eigen::Vector3d theta_v0;
    Eigen::Vector3d theta_m0;
    double q_tilde = 0.0;
    double m_tilde = 0.0;
};

inline constexpr int kBurnIn = 200;

/// Per-replication generator keyed by (seed, replication index).
std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t replication);

/**
 * Draws n observations of
 *   (X_t, Y_t)' = g1 + g2 Z1_t + g3 Z2_t + (g4 + g5 Z1_t) eps_t,  eps_t ~ t_df(0, Sigma),
 * with Z1_t = 0.3 + 0.4 exp(xi_t), xi_t = 0.6 xi_{t-1} + N(0,1),
 * Z2_t = 0.75 Z2_{t-1} + N(0,1). Both covariate parts are (1, Z1, Z2).
 */
Dataset simulate_dgp(const SimConfig& config, std::mt19937_64& rng);

/// beta-quantile of the first innovation margin.
double q_tilde(const SimConfig& config);

/// E[eps_2 | eps_1 > q_tilde] in closed form (linear conditional mean of elliptical laws).
double m_tilde_closed_form(const SimConfig& config);

struct MonteCarloEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
};

/// Antithetic Monte Carlo estimate of E[eps_2 | eps_1 > q_tilde].
MonteCarloEstimate m_tilde_monte_carlo(const SimConfig& config, std::uint64_t draws, std::uint64_t seed);

/// Cached Monte Carlo values for the default gamma/Sigma/df at beta in {0.9, 0.95, 0.975}.
std::optional<MonteCarloEstimate> cached_m_tilde(const SimConfig& config);

/// True parameters; m_tilde comes from the cache when available, else the closed form.
TrueParams true_params(const SimConfig& config);

struct ReplicationRecord {
    bool ok = false;
    std::string failure;
    VectorXd estimate;  // (theta_v, theta_m)
    VectorXd se;
    int exceedance_count = 0;
    int ties = 0;
    std::optional<MatrixXd> avar;
};

struct SummaryRow {
    std::string parameter;
    double truth = 0.0;
    double bias = 0.0;
    std::optional<double> sd_emp;
    double sd_asy_mean = 0.0;
    std::optional<double> coverage;
    int n_fail = 0;
};

struct MonteCarloResult {
    SimConfig config;
    TrueParams truth;
    std::vector<ReplicationRecord> replications;
    std::vector<SummaryRow> summary;
    int n_fail = 0;
};

inline constexpr double kMaxFailureShare = 0.05;

/**
 * Simulates and fits `m_reps` replications on up to `threads` workers and
 * reduces them in replication order. Replications without a covariance count
 * as failures; more than 5% failures throws.
 */
MonteCarloResult run_monte_carlo(const SimConfig& config, int threads = 1, double level = 0.95);

void write_summary_csv(const MonteCarloResult& result, std::ostream& out);
void write_summary_json(const MonteCarloResult& result, std::ostream& out);

}  // namespace mesreg
