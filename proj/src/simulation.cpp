#include "mesreg/simulation.hpp"

#include "mesreg/mes_step.hpp"
#include "mesreg/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

namespace mesreg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

void check_config(const SimConfig& config) {
    if (!(config.beta > 0.0 && config.beta < 1.0)) throw Error(ErrorCode::level, "beta must lie in (0, 1)");
    if (config.n < 1 || config.m_reps < 1) throw Error(ErrorCode::dimension, "n and the replication count must be positive");
    if (!(config.df > 0.0)) throw Error(ErrorCode::level, "degrees of freedom must be positive");
    const Eigen::LLT<Eigen::Matrix2d> llt(config.sigma);
    if (llt.info() != Eigen::Success || std::abs(config.sigma(0, 1) - config.sigma(1, 0)) > 0.0) {
        throw Error(ErrorCode::numeric, "Sigma must be symmetric positive definite");
    }
}

struct TDraw {
    Eigen::Vector2d gauss;  // L g
    double scale = 1.0;     // 1 / sqrt(chi2_df / df)
};

std::string format_number(double v) {
    std::array<char, 32> buf{};
    std::snprintf(buf.data(), buf.size(), "%.10g", v);
    return buf.data();
}

std::string format_optional(const std::optional<double>& v) { return v ? format_number(*v) : "NA"; }

}  // namespace

std::mt19937_64 replication_rng(std::uint64_t seed, std::uint64_t replication) {
    const std::uint64_t key = splitmix64(splitmix64(seed) ^ splitmix64(replication + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)};
    return std::mt19937_64(seq);
}

Dataset simulate_dgp(const SimConfig& config, std::mt19937_64& rng) {
    check_config(config);
    const Eigen::Matrix2d chol = config.sigma.llt().matrixL();
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi2(config.df);
    const auto& g = config.gamma;

    double xi = normal(rng) * std::sqrt(1.0 / (1.0 - 0.36));
    double z2 = normal(rng) * std::sqrt(1.0 / (1.0 - 0.5625));
    const int total = config.n + kBurnIn;
    Dataset data;
    data.y.resize(config.n);
    data.x.resize(config.n);
    data.z_v.resize(config.n, 3);
    for (int t = 0; t < total; ++t) {
        xi = 0.6 * xi + normal(rng);
        z2 = 0.75 * z2 + normal(rng);
        const double z1 = 0.3 + 0.4 * std::exp(xi);
        const Eigen::Vector2d gauss{normal(rng), normal(rng)};
        const double mix = std::sqrt(chi2(rng) / config.df);
        const Eigen::Vector2d eps = (chol * gauss) / mix;
        if (t < kBurnIn) continue;
        const int row = t - kBurnIn;
        const double location = g(0) + g(1) * z1 + g(2) * z2;
        const double scale = g(3) + g(4) * z1;
        data.x(row) = location + scale * eps(0);
        data.y(row) = location + scale * eps(1);
        data.z_v.row(row) << 1.0, z1, z2;
    }
    data.z_m = data.z_v;
    data.intercept_v = data.intercept_m = true;
    data.z_v_names = data.z_m_names = {"const", "z1", "z2"};
    return data;
}

double q_tilde(const SimConfig& config) {
    check_config(config);
    const boost::math::students_t_distribution<double> t(config.df);
    return std::sqrt(config.sigma(0, 0)) * boost::math::quantile(t, config.beta);
}

double m_tilde_closed_form(const SimConfig& config) {
    check_config(config);
    if (!(config.df > 1.0)) throw Error(ErrorCode::numeric, "the conditional mean needs df > 1");
    const boost::math::students_t_distribution<double> t(config.df);
    const double nu = config.df;
    const double q = boost::math::quantile(t, config.beta);
    // E[T | T > q] for a standard t_nu variable.
    const double tail_mean = boost::math::pdf(t, q) * (nu + q * q) / ((nu - 1.0) * (1.0 - config.beta));
    return config.sigma(0, 1) / std::sqrt(config.sigma(0, 0)) * tail_mean;
}

MonteCarloEstimate m_tilde_monte_carlo(const SimConfig& config, std::uint64_t draws, std::uint64_t seed) {
    check_config(config);
    const double q = q_tilde(config);
    const Eigen::Matrix2d chol = config.sigma.llt().matrixL();
    std::mt19937_64 rng = replication_rng(seed, 0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::chi_squared_distribution<double> chi2(config.df);
    const std::uint64_t pairs = std::max<std::uint64_t>(draws / 2, 1);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::uint64_t k = 0; k < pairs; ++k) {
        const Eigen::Vector2d gauss{normal(rng), normal(rng)};
        const double mix = std::sqrt(chi2(rng) / config.df);
        const Eigen::Vector2d eps = (chol * gauss) / mix;
        // Antithetic partner: -eps shares the mixing draw.
        const double term = 0.5 * ((eps(0) > q ? eps(1) : 0.0) + (-eps(0) > q ? -eps(1) : 0.0));
        sum += term;
        sum_sq += term * term;
    }
    const auto m = static_cast<double>(pairs);
    const double mean = sum / m;
    const double var = std::max(sum_sq / m - mean * mean, 0.0);
    const double tail = 1.0 - config.beta;
    return {mean / tail, std::sqrt(var / m) / tail};
}

std::optional<MonteCarloEstimate> cached_m_tilde(const SimConfig& config) {
    const SimConfig defaults;
    if (config.df != defaults.df || config.sigma != defaults.sigma) return std::nullopt;
    // Generated with `mesreg mtilde --draws 10000000 --seed 20240601`.
    struct Entry {
        double beta;
        MonteCarloEstimate value;
    };
    static constexpr std::array<Entry, 3> kTable{{
        {0.9, {2.6254161404295377, 0.0035023009662363807}},
        {0.95, {3.2492200187791016, 0.0059497560424383016}},
        {0.975, {3.8899052860521652, 0.0098898712086958347}},
    }};
    for (const auto& entry : kTable) {
        if (std::abs(entry.beta - config.beta) < 1e-12) return entry.value;
    }
    return std::nullopt;
}

TrueParams true_params(const SimConfig& config) {
    TrueParams truth;
    truth.q_tilde = q_tilde(config);
    const auto cached = cached_m_tilde(config);
    truth.m_tilde = cached ? cached->estimate : m_tilde_closed_form(config);
    const auto& g = config.gamma;
    truth.theta_v0 << g(0) + g(3) * truth.q_tilde, g(1) + g(4) * truth.q_tilde, g(2);
    truth.theta_m0 << g(0) + g(3) * truth.m_tilde, g(1) + g(4) * truth.m_tilde, g(2);
    return truth;
}

MonteCarloResult run_monte_carlo(const SimConfig& config, int threads, double level) {
    check_config(config);
    MonteCarloResult result;
    result.config = config;
    result.truth = true_params(config);
    const auto reps = static_cast<std::size_t>(config.m_reps);
    result.replications.resize(reps);

    const auto work = [&](std::size_t r) {
        ReplicationRecord& rec = result.replications[r];
        try {
            auto rng = replication_rng(config.seed, r);
            const Dataset data = simulate_dgp(config, rng);
            const JointFit fit = fit_joint(data, ModelSpec::linear(config.beta, data));
            rec.estimate = fit.estimates();
            rec.exceedance_count = fit.exceedance_count;
            rec.ties = fit.ties;
            if (!fit.has_inference()) {
                rec.failure = fit.warnings.empty() ? "no covariance" : fit.warnings.back();
                return;
            }
            rec.se = *fit.se;
            rec.avar = fit.avar;
            rec.ok = true;
        } catch (const std::exception& e) {
            rec.failure = e.what();
        }
    };

    const auto workers = static_cast<std::size_t>(std::clamp(threads, 1, config.m_reps));
    if (workers == 1) {
        for (std::size_t r = 0; r < reps; ++r) work(r);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) work(r);
            });
        }
    }

    for (const auto& rec : result.replications) result.n_fail += rec.ok ? 0 : 1;
    if (result.n_fail > kMaxFailureShare * static_cast<double>(config.m_reps)) {
        throw Error(ErrorCode::convergence, std::to_string(result.n_fail) + " of " + std::to_string(config.m_reps) +
                                                " replications failed (limit 5%)");
    }

    VectorXd truth(6);
    truth << result.truth.theta_v0, result.truth.theta_m0;
    const double z = stats::normal_quantile(1.0 - (1.0 - level) / 2.0);
    static const std::array<std::string, 6> kNames{"theta_v1", "theta_v2", "theta_v3",
                                                   "theta_m1", "theta_m2", "theta_m3"};
    for (Eigen::Index j = 0; j < 6; ++j) {
        std::vector<double> est;
        double se_sum = 0.0;
        int covered = 0;
        for (const auto& rec : result.replications) {
            if (!rec.ok) continue;
            est.push_back(rec.estimate(j));
            se_sum += rec.se(j);
            covered += std::abs(rec.estimate(j) - truth(j)) <= z * rec.se(j) ? 1 : 0;
        }
        SummaryRow row;
        row.parameter = kNames[static_cast<std::size_t>(j)];
        row.truth = truth(j);
        row.n_fail = result.n_fail;
        const auto ok = static_cast<double>(est.size());
        row.bias = stats::mean(est) - truth(j);
        row.sd_asy_mean = se_sum / ok;
        if (est.size() >= 2) {
            row.sd_emp = stats::sample_sd(est);
            row.coverage = covered / ok;
        }
        result.summary.push_back(row);
    }
    return result;
}

void write_summary_csv(const MonteCarloResult& result, std::ostream& out) {
    out << "parameter,truth,bias,sd_emp,sd_asy_mean,coverage,n_fail\n";
    for (const auto& row : result.summary) {
        out << row.parameter << ',' << format_number(row.truth) << ',' << format_number(row.bias) << ','
            << format_optional(row.sd_emp) << ',' << format_number(row.sd_asy_mean) << ','
            << format_optional(row.coverage) << ',' << row.n_fail << '\n';
    }
}

void write_summary_json(const MonteCarloResult& result, std::ostream& out) {
    using nlohmann::json;
    const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json rows = json::array();
    for (const auto& row : result.summary) {
        rows.push_back({{"parameter", row.parameter},
                        {"truth", row.truth},
                        {"bias", row.bias},
                        {"sd_emp", opt(row.sd_emp)},
                        {"sd_asy_mean", row.sd_asy_mean},
                        {"coverage", opt(row.coverage)},
                        {"n_fail", row.n_fail}});
    }
    const auto& c = result.config;
    const json doc{{"schema_version", 1},
                   {"config",
                    {{"beta", c.beta}, {"n", c.n}, {"reps", c.m_reps}, {"seed", c.seed}, {"df", c.df}}},
                   {"q_tilde", result.truth.q_tilde},
                   {"m_tilde", result.truth.m_tilde},
                   {"n_fail", result.n_fail},
                   {"summary", rows}};
    out << doc.dump(2) << '\n';
}

}  // namespace mesreg
