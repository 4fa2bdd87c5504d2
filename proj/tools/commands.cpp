#include "commands.hpp"

#include "mesreg/brs.hpp"
#include "mesreg/es_regression.hpp"
#include "mesreg/inference.hpp"
#include "mesreg/mes_step.hpp"
#include "mesreg/portfolio.hpp"
#include "mesreg/simulation.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace mesreg::cli {

namespace {

using nlohmann::json;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

int exit_code(ErrorCode code) {
    switch (code) {
        case ErrorCode::level:
            return kUsage;
        case ErrorCode::schema:
        case ErrorCode::parse:
        case ErrorCode::dimension:
        case ErrorCode::non_finite:
        case ErrorCode::link:
        case ErrorCode::io:
        case ErrorCode::window:
            return kDataError;
        default:
            return kEstimationError;
    }
}

void check_beta(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) {
        throw UsageError("--beta must lie strictly between 0 and 1 (got " + std::to_string(beta) + ")");
    }
}

void write_file(const std::string& path, const std::function<void(std::ostream&)>& body) {
    std::ofstream file(path);
    if (!file) throw Error(ErrorCode::io, "cannot open " + path + " for writing");
    body(file);
    if (!file) throw Error(ErrorCode::io, "failed writing " + path);
}

std::string fixed(double v, int width = 10, int precision = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%*.*f", width, precision, v);
    return buf;
}

json matrix_json(const MatrixXd& a) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
        rows.push_back(row);
    }
    return rows;
}

json vector_json(const VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

/// Estimates with inference columns; inference fields are null when unavailable.
json parameters_json(const std::vector<std::string>& names, const VectorXd& estimate,
                     const std::optional<InferenceReport>& rep) {
    json params = json::array();
    for (Eigen::Index j = 0; j < estimate.size(); ++j) {
        json entry{{"name", names[static_cast<std::size_t>(j)]}, {"estimate", estimate(j)}};
        if (rep) {
            entry["se"] = rep->se(j);
            entry["t"] = rep->t_stats(j);
            entry["p_value"] = rep->p_values(j);
            entry["ci_lower"] = rep->ci_lower(j);
            entry["ci_upper"] = rep->ci_upper(j);
        } else {
            for (const char* key : {"se", "t", "p_value", "ci_lower", "ci_upper"}) entry[key] = nullptr;
        }
        params.push_back(entry);
    }
    return params;
}

json diagnostics_json(const std::optional<FitDiagnostics>& diag) {
    if (!diag) return nullptr;
    return {{"V", matrix_json(diag->v)},
            {"Lambda", matrix_json(diag->lambda)},
            {"M_star", matrix_json(diag->m_star)},
            {"Lambda1", matrix_json(diag->lambda1)},
            {"Lambda2", matrix_json(diag->lambda2)},
            {"cond_Lambda", diag->cond_lambda},
            {"cond_Lambda1", diag->cond_lambda1},
            {"kernel_count", diag->kernel_count}};
}

std::optional<InferenceReport> maybe_report(const VectorXd& estimate, const std::optional<MatrixXd>& avar, int n,
                                            double level) {
    if (!avar) return std::nullopt;
    return report(estimate, *avar, n, level);
}

json joint_json(const JointFit& fit, const std::vector<std::string>& names, double level) {
    const auto rep = maybe_report(fit.estimates(), fit.avar, fit.n, level);
    return {{"parameters", parameters_json(names, fit.estimates(), rep)},
            {"bandwidth", fit.bandwidth ? json(*fit.bandwidth) : json(nullptr)},
            {"avar", fit.avar ? matrix_json(*fit.avar) : json(nullptr)},
            {"diagnostics", diagnostics_json(fit.diagnostics)},
            {"n", fit.n},
            {"exceedance_count", fit.exceedance_count},
            {"ties", fit.ties},
            {"converged", fit.converged},
            {"loss_values", {{"var", fit.loss_values.first}, {"mes", fit.loss_values.second}}},
            {"warnings", fit.warnings}};
}

json es_json(const EsFit& fit, const std::vector<std::string>& names, double level) {
    const auto rep = maybe_report(fit.estimates(), fit.avar, fit.n, level);
    return {{"parameters", parameters_json(names, fit.estimates(), rep)},
            {"bandwidth", fit.bandwidth ? json(*fit.bandwidth) : json(nullptr)},
            {"avar", fit.avar ? matrix_json(*fit.avar) : json(nullptr)},
            {"diagnostics", diagnostics_json(fit.diagnostics)},
            {"n", fit.n},
            {"exceedance_count", fit.exceedance_count},
            {"converged", fit.converged},
            {"warnings", fit.warnings}};
}

void print_table(std::ostream& out, const std::vector<std::string>& names, const VectorXd& estimate,
                 const std::optional<InferenceReport>& rep) {
    std::size_t width = 9;
    for (const auto& name : names) width = std::max(width, name.size());
    out << std::string(width, ' ') << "  estimate        se         t   p-value\n";
    for (Eigen::Index j = 0; j < estimate.size(); ++j) {
        const auto& name = names[static_cast<std::size_t>(j)];
        out << name << std::string(width - name.size(), ' ') << fixed(estimate(j));
        if (rep) {
            out << fixed(rep->se(j)) << fixed(rep->t_stats(j)) << fixed(rep->p_values(j));
        } else {
            out << "        NA        NA        NA";
        }
        out << '\n';
    }
}

std::vector<std::string> prefixed(const std::string& prefix, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    for (const auto& name : names) out.push_back(prefix + name);
    return out;
}

std::optional<std::uint64_t> seed_override() {
    const char* env = std::getenv("MESREG_SEED");
    if (env == nullptr || *env == '\0') return std::nullopt;
    try {
        std::size_t used = 0;
        const auto value = std::stoull(env, &used);
        if (used != std::string(env).size()) throw std::invalid_argument(env);
        return value;
    } catch (const std::exception&) {
        throw UsageError(std::string("MESREG_SEED is not an unsigned integer: ") + env);
    }
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string input, y, x, zv = "1", zm = "1", out;
    double beta = 0.0, level = 0.95;
};

int cmd_fit(const FitArgs& a, std::ostream& out) {
    check_beta(a.beta);
    const Dataset data = load_csv(a.input, {a.y, a.x, split_columns(a.zv), split_columns(a.zm)});
    const ModelSpec spec = ModelSpec::linear(a.beta, data);
    validate(data, spec);
    const VarFit var_fit = fit_var(data, spec);
    const MesFit mes_fit = fit_mes(data, spec, var_fit);
    const JointFit fit = complete_fit(data, spec, var_fit, mes_fit);
    const auto names = parameter_names(data, spec);

    const auto rep = maybe_report(fit.estimates(), fit.avar, fit.n, a.level);
    out << "MES regression, beta = " << a.beta << ", n = " << fit.n << ", exceedances = " << fit.exceedance_count
        << "\n";
    print_table(out, names, fit.estimates(), rep);
    for (const auto& w : fit.warnings) out << "warning: " << w << '\n';

    if (!a.out.empty()) {
        json doc = joint_json(fit, names, a.level);
        doc["schema_version"] = 1;
        doc["command"] = "fit";
        doc["beta"] = a.beta;
        doc["level"] = a.level;
        doc["p"] = spec.p;
        doc["q"] = spec.q;
        write_file(a.out + ".json", [&](std::ostream& f) { f << doc.dump(2) << '\n'; });
        write_file(a.out + "_paths.csv", [&](std::ostream& f) {
            f << "t,x,y,var,mes,exceedance\n";
            f.precision(17);
            for (int t = 0; t < data.n(); ++t) {
                f << t << ',' << data.x(t) << ',' << data.y(t) << ',' << var_fit.fitted(t) << ','
                  << mes_fit.fitted(t) << ',' << (var_fit.exceed_mask(t) ? 1 : 0) << '\n';
            }
        });
    }
    return kOk;
}

struct SimulateArgs {
    double beta = 0.0, level = 0.95;
    int n = 2000, reps = 500, threads = 1;
    std::uint64_t seed = 1;
    std::string out;
    bool full_grid = false;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
    SimConfig config;
    config.seed = seed_override().value_or(a.seed);
    config.m_reps = a.reps;
    if (a.reps < 1 || a.n < 1) throw UsageError("--n and --reps must be positive");

    std::vector<std::pair<double, int>> cells;
    if (a.full_grid) {
        for (const double b : {0.9, 0.95, 0.975}) {
            for (const int n : {500, 1000, 2000, 4000}) cells.emplace_back(b, n);
        }
    } else {
        check_beta(a.beta);
        cells.emplace_back(a.beta, a.n);
    }
    for (const auto& [beta, n] : cells) {
        config.beta = beta;
        config.n = n;
        const MonteCarloResult result = run_monte_carlo(config, a.threads, a.level);
        if (result.n_fail > 0) err << result.n_fail << " replication(s) failed and were excluded\n";
        if (a.out.empty()) {
            if (a.full_grid) out << "# beta = " << beta << ", n = " << n << '\n';
            write_summary_csv(result, out);
            continue;
        }
        std::string stem = a.out;
        if (a.full_grid) {
            std::ostringstream tag;
            tag << "_b" << beta << "_n" << n;
            stem += tag.str();
        }
        write_file(stem + ".csv", [&](std::ostream& f) { write_summary_csv(result, f); });
        write_file(stem + ".json", [&](std::ostream& f) { write_summary_json(result, f); });
    }
    return kOk;
}

struct DecomposeArgs {
    std::string input, x, components, weights, constant_weights, zv = "1", zm = "1", out;
    double beta = 0.0, level = 0.95;
};

int cmd_decompose(const DecomposeArgs& a, std::ostream& out) {
    check_beta(a.beta);
    const auto component_names = split_columns(a.components);
    if (component_names.empty()) throw UsageError("--components needs at least one column");
    if (a.weights.empty() == a.constant_weights.empty()) {
        throw UsageError("give exactly one of --weights (columns) or --constant-weights (numbers)");
    }
    const Dataset base = load_csv(a.input, {a.x, a.x, split_columns(a.zv), split_columns(a.zm)});
    const auto n = base.n();
    const auto d_count = static_cast<Eigen::Index>(component_names.size());

    std::vector<std::string> wanted = component_names;
    const auto weight_columns = split_columns(a.weights);
    wanted.insert(wanted.end(), weight_columns.begin(), weight_columns.end());
    const CsvTable table = read_csv_table(a.input, wanted);
    MatrixXd components(n, d_count);
    MatrixXd weights(n, d_count);
    for (Eigen::Index d = 0; d < d_count; ++d) {
        const auto& col = table.column(component_names[static_cast<std::size_t>(d)]);
        components.col(d) = Eigen::Map<const VectorXd>(col.data(), n);
    }
    if (!weight_columns.empty()) {
        if (static_cast<Eigen::Index>(weight_columns.size()) != d_count) {
            throw UsageError("--weights needs one column per component");
        }
        for (Eigen::Index d = 0; d < d_count; ++d) {
            const auto& col = table.column(weight_columns[static_cast<std::size_t>(d)]);
            weights.col(d) = Eigen::Map<const VectorXd>(col.data(), n);
        }
    } else {
        const auto values = split_columns(a.constant_weights);
        if (static_cast<Eigen::Index>(values.size()) != d_count) {
            throw UsageError("--constant-weights needs one number per component");
        }
        for (Eigen::Index d = 0; d < d_count; ++d) {
            try {
                weights.col(d).setConstant(std::stod(values[static_cast<std::size_t>(d)]));
            } catch (const std::exception&) {
                throw UsageError("--constant-weights entry is not a number: " + values[static_cast<std::size_t>(d)]);
            }
        }
    }

    const Decomposition dec = decompose(base.x, components, weights, base.z_v, base.z_m, a.beta);
    const ModelSpec spec = ModelSpec::linear(a.beta, base);
    const auto names = parameter_names(base, spec);
    auto es_names = names;
    for (int j = spec.p; j < spec.p + spec.q; ++j) es_names[static_cast<std::size_t>(j)].replace(0, 1, "e");

    out << "ES regression of " << a.x << ", beta = " << a.beta << '\n';
    print_table(out, es_names, dec.es.estimates(), maybe_report(dec.es.estimates(), dec.es.avar, dec.es.n, a.level));
    json reports = json::array();
    reports.push_back({{"name", a.x}, {"kind", "ES"}, {"fit", es_json(dec.es, es_names, a.level)}});
    for (Eigen::Index d = 0; d < d_count; ++d) {
        const auto& fit = dec.components[static_cast<std::size_t>(d)];
        const auto& name = component_names[static_cast<std::size_t>(d)];
        out << "\nMES regression of " << name << '\n';
        print_table(out, names, fit.estimates(), maybe_report(fit.estimates(), fit.avar, fit.n, a.level));
        reports.push_back({{"name", name}, {"kind", "MES"}, {"fit", joint_json(fit, names, a.level)}});
    }
    out << "\nreconciliation residual (theta_e - sum_d mean(w_d) theta_m_d):";
    for (const double r : dec.residual) out << ' ' << r;
    out << '\n';

    if (!a.out.empty()) {
        const json doc{{"schema_version", 1},
                       {"command", "decompose"},
                       {"beta", a.beta},
                       {"level", a.level},
                       {"mean_weights", vector_json(dec.mean_weights)},
                       {"weighted_sum", vector_json(dec.weighted_sum)},
                       {"reconciliation_residual", vector_json(dec.residual)},
                       {"reports", reports}};
        write_file(a.out + ".json", [&](std::ostream& f) { f << doc.dump(2) << '\n'; });
        write_file(a.out + "_reconciliation.csv", [&](std::ostream& f) {
            f.precision(17);
            f << "parameter,es,weighted_sum,residual\n";
            for (Eigen::Index j = 0; j < dec.residual.size(); ++j) {
                f << es_names[static_cast<std::size_t>(spec.p + j)] << ',' << dec.es.theta_e(j) << ','
                  << dec.weighted_sum(j) << ',' << dec.residual(j) << '\n';
            }
        });
    }
    return kOk;
}

struct BrsArgs {
    std::string input, y, x, zm = "1", out;
    double beta = 0.0;
    int window = kDefaultBrsWindow;
};

int cmd_brs(const BrsArgs& a, std::ostream& out) {
    check_beta(a.beta);
    const auto zm = split_columns(a.zm);
    const Dataset data = load_csv(a.input, {a.y, a.x, zm, zm});
    const BrsFit fit = fit_brs(data, a.window, a.beta);
    const auto names = prefixed("m:", data.z_m_names);

    out << "BRS regression, beta = " << a.beta << ", window S = " << fit.window << ", rows = " << fit.y_star.size()
        << '\n';
    out << "           estimate    OLS se\n";
    for (Eigen::Index j = 0; j < fit.theta.size(); ++j) {
        const auto& name = names[static_cast<std::size_t>(j)];
        out << name << std::string(name.size() < 9 ? 9 - name.size() : 0, ' ') << fixed(fit.theta(j))
            << fixed(fit.se_ols(j)) << '\n';
    }
    if (!a.out.empty()) {
        json params = json::array();
        for (Eigen::Index j = 0; j < fit.theta.size(); ++j) {
            params.push_back(
                {{"name", names[static_cast<std::size_t>(j)]}, {"estimate", fit.theta(j)}, {"se_ols", fit.se_ols(j)}});
        }
        const json doc{{"schema_version", 1}, {"command", "brs"},      {"beta", a.beta},
                       {"window", a.window},  {"parameters", params}, {"rows", fit.y_star.size()}};
        write_file(a.out + ".json", [&](std::ostream& f) { f << doc.dump(2) << '\n'; });
        write_file(a.out + "_ystar.csv", [&](std::ostream& f) {
            f.precision(17);
            f << "t,y_star\n";
            for (Eigen::Index k = 0; k < fit.y_star.size(); ++k) f << fit.window + k << ',' << fit.y_star(k) << '\n';
        });
    }
    return kOk;
}

struct ErcArgs {
    std::string input, assets, z = "1", out;
    double beta = 0.0, tolerance = 0.01;
    int max_iter = 200, t = -1, backtest_start = -1, step = 1;
};

int cmd_erc(const ErcArgs& a, std::ostream& out) {
    check_beta(a.beta);
    const auto assets = split_columns(a.assets);
    if (assets.empty()) throw UsageError("--assets needs at least one column");
    const auto z_names = split_columns(a.z);
    std::vector<std::string> wanted = assets;
    for (const auto& name : z_names) {
        if (name != kInterceptToken) wanted.push_back(name);
    }
    const CsvTable table = read_csv_table(a.input, wanted);
    const Dataset zdata = dataset_from_table(table, {assets.front(), assets.front(), z_names, z_names});
    const auto n = zdata.n();
    MatrixXd losses(n, static_cast<Eigen::Index>(assets.size()));
    for (std::size_t d = 0; d < assets.size(); ++d) {
        losses.col(static_cast<Eigen::Index>(d)) = Eigen::Map<const VectorXd>(table.column(assets[d]).data(), n);
    }
    const ErcOptions options{a.tolerance, a.max_iter};
    const auto write_weights_header = [&](std::ostream& f) {
        f << "t";
        for (const auto& name : assets) f << ',' << name;
        f << '\n';
    };

    if (a.backtest_start >= 0) {
        const Backtest erc = backtest_erc(losses, zdata.z_m, a.beta, a.backtest_start, a.step, options);
        const Backtest ew = backtest_equal_weight(losses, a.beta, a.backtest_start, a.step);
        const auto metrics_json = [](const PerformanceMetrics& m) {
            return json{{"avg_return", m.avg_return},
                        {"std", m.std},
                        {"var", m.var},
                        {"es", m.es},
                        {"sharpe", m.sharpe ? json(*m.sharpe) : json(nullptr)},
                        {"rorac", m.rorac ? json(*m.rorac) : json(nullptr)}};
        };
        int unconverged = 0;
        for (const bool c : erc.converged) unconverged += c ? 0 : 1;
        out << "backtest over " << erc.dates.size() << " rows, " << erc.iterations.size() << " rebalances, "
            << unconverged << " without convergence\n";
        out << "          avg return       std       VaR        ES\n";
        for (const auto& [label, bt] : {std::pair{"ERC", &erc}, std::pair{"EW ", &ew}}) {
            const auto& m = bt->metrics;
            out << label << "     " << fixed(m.avg_return) << fixed(m.std) << fixed(m.var) << fixed(m.es) << '\n';
        }
        if (!a.out.empty()) {
            const json doc{{"schema_version", 1},
                           {"command", "erc"},
                           {"beta", a.beta},
                           {"tolerance", a.tolerance},
                           {"start", a.backtest_start},
                           {"step", a.step},
                           {"iterations", erc.iterations},
                           {"converged", erc.converged},
                           {"metrics", {{"erc", metrics_json(erc.metrics)}, {"ew", metrics_json(ew.metrics)}}}};
            write_file(a.out + ".json", [&](std::ostream& f) { f << doc.dump(2) << '\n'; });
            write_file(a.out + "_weights.csv", [&](std::ostream& f) {
                f.precision(17);
                write_weights_header(f);
                for (Eigen::Index k = 0; k < erc.weights.rows(); ++k) {
                    f << erc.dates[static_cast<std::size_t>(k)];
                    for (Eigen::Index d = 0; d < erc.weights.cols(); ++d) f << ',' << erc.weights(k, d);
                    f << '\n';
                }
            });
        }
        return kOk;
    }

    const int t = a.t >= 0 ? a.t : n - 1;
    const PortfolioState state = erc_weights(losses, zdata.z_m, a.beta, t, options);
    out << "ERC weights for row " << t << " after " << state.iterations << " update(s), spread = " << state.spread
        << (state.converged ? "" : " (not converged)") << '\n';
    for (std::size_t d = 0; d < assets.size(); ++d) {
        out << assets[d] << ": weight" << fixed(state.weights(static_cast<Eigen::Index>(d)))
            << "  RC" << fixed(state.rc_forecasts(static_cast<Eigen::Index>(d))) << '\n';
    }
    if (state.clamped) out << "warning: a nonpositive risk contribution was clamped\n";
    if (!a.out.empty()) {
        json trace = json::array();
        for (std::size_t k = 0; k < state.spread_trace.size(); ++k) {
            trace.push_back({{"spread", state.spread_trace[k]}, {"weights", vector_json(state.weight_trace[k])}});
        }
        const json doc{{"schema_version", 1},
                       {"command", "erc"},
                       {"beta", a.beta},
                       {"t", t},
                       {"tolerance", a.tolerance},
                       {"assets", assets},
                       {"weights", vector_json(state.weights)},
                       {"rc_forecasts", vector_json(state.rc_forecasts)},
                       {"es_forecast", state.es_forecast},
                       {"iterations", state.iterations},
                       {"spread", state.spread},
                       {"converged", state.converged},
                       {"clamped", state.clamped},
                       {"trace", trace}};
        write_file(a.out + ".json", [&](std::ostream& f) { f << doc.dump(2) << '\n'; });
        write_file(a.out + "_weights.csv", [&](std::ostream& f) {
            f.precision(17);
            write_weights_header(f);
            f << t;
            for (const double w : state.weights) f << ',' << w;
            f << '\n';
        });
    }
    return kOk;
}

struct MtildeArgs {
    double beta = 0.0;
    std::uint64_t draws = 10'000'000;
    std::uint64_t seed = 20240601;
};

int cmd_mtilde(const MtildeArgs& a, std::ostream& out) {
    check_beta(a.beta);
    SimConfig config;
    config.beta = a.beta;
    const auto mc = m_tilde_monte_carlo(config, a.draws, seed_override().value_or(a.seed));
    const json doc{{"schema_version", 1},
                   {"command", "mtilde"},
                   {"beta", a.beta},
                   {"draws", a.draws},
                   {"q_tilde", q_tilde(config)},
                   {"m_tilde", mc.estimate},
                   {"std_error", mc.std_error},
                   {"closed_form", m_tilde_closed_form(config)}};
    char buf[160];
    std::snprintf(buf, sizeof buf, "{%.6g, {%.17g, %.17g}}", a.beta, mc.estimate, mc.std_error);
    out << doc.dump(2) << '\n' << "table entry: " << buf << '\n';
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Two-step VaR/MES regression toolkit", "mesreg"};
    app.require_subcommand(1);

    FitArgs fit;
    auto* fit_cmd = app.add_subcommand("fit", "Fit a linear (VaR, MES) regression to a CSV file");
    fit_cmd->add_option("--input", fit.input, "CSV file")->required();
    fit_cmd->add_option("--y", fit.y, "Outcome column")->required();
    fit_cmd->add_option("--x", fit.x, "Distress column")->required();
    fit_cmd->add_option("--zv", fit.zv, "VaR covariates, comma-separated; 1 = intercept");
    fit_cmd->add_option("--zm", fit.zm, "MES covariates, comma-separated; 1 = intercept");
    fit_cmd->add_option("--beta", fit.beta, "Probability level")->required();
    fit_cmd->add_option("--level", fit.level, "Confidence level");
    fit_cmd->add_option("--out", fit.out, "Output prefix for <out>.json and <out>_paths.csv");

    SimulateArgs sim;
    auto* sim_cmd = app.add_subcommand("simulate", "Monte Carlo study on the simulated location-scale design");
    sim_cmd->add_option("--beta", sim.beta, "Probability level");
    sim_cmd->add_option("--n", sim.n, "Sample size");
    sim_cmd->add_option("--reps", sim.reps, "Replications");
    sim_cmd->add_option("--seed", sim.seed, "Seed (MESREG_SEED overrides)");
    sim_cmd->add_option("--threads", sim.threads, "Worker threads");
    sim_cmd->add_option("--level", sim.level, "Confidence level for coverage");
    sim_cmd->add_option("--out", sim.out, "Output prefix for <out>.csv and <out>.json");
    sim_cmd->add_flag("--full-grid", sim.full_grid, "All beta in {0.9,0.95,0.975} and n in {500,1000,2000,4000}");

    DecomposeArgs dec;
    auto* dec_cmd = app.add_subcommand("decompose", "Split the ES of x into MES components");
    dec_cmd->add_option("--input", dec.input, "CSV file")->required();
    dec_cmd->add_option("--x", dec.x, "Aggregate column")->required();
    dec_cmd->add_option("--components", dec.components, "Component columns")->required();
    dec_cmd->add_option("--weights", dec.weights, "Weight columns, one per component");
    dec_cmd->add_option("--constant-weights", dec.constant_weights, "Constant weights, one per component");
    dec_cmd->add_option("--zv", dec.zv, "VaR covariates");
    dec_cmd->add_option("--zm", dec.zm, "ES/MES covariates");
    dec_cmd->add_option("--beta", dec.beta, "Probability level")->required();
    dec_cmd->add_option("--level", dec.level, "Confidence level");
    dec_cmd->add_option("--out", dec.out, "Output prefix");

    BrsArgs brs;
    auto* brs_cmd = app.add_subcommand("brs", "Rolling-window MES transform followed by OLS");
    brs_cmd->add_option("--input", brs.input, "CSV file")->required();
    brs_cmd->add_option("--y", brs.y, "Outcome column")->required();
    brs_cmd->add_option("--x", brs.x, "Distress column")->required();
    brs_cmd->add_option("--zm", brs.zm, "Regressors");
    brs_cmd->add_option("--beta", brs.beta, "Probability level")->required();
    brs_cmd->add_option("--window", brs.window, "Window S (S + 1 points)");
    brs_cmd->add_option("--out", brs.out, "Output prefix");

    ErcArgs erc;
    auto* erc_cmd = app.add_subcommand("erc", "Equal-risk-contribution weights from MES forecasts");
    erc_cmd->add_option("--input", erc.input, "CSV file with component losses")->required();
    erc_cmd->add_option("--assets", erc.assets, "Loss columns")->required();
    erc_cmd->add_option("--z", erc.z, "Forecasting covariates (lagged), 1 = intercept");
    erc_cmd->add_option("--beta", erc.beta, "Probability level")->required();
    erc_cmd->add_option("--t", erc.t, "Forecast row (default: last row)");
    erc_cmd->add_option("--tol", erc.tolerance, "Spread tolerance");
    erc_cmd->add_option("--max-iter", erc.max_iter, "Iteration budget");
    erc_cmd->add_option("--backtest-start", erc.backtest_start, "Run ERC and EW backtests from this row");
    erc_cmd->add_option("--step", erc.step, "Rebalancing step for backtests");
    erc_cmd->add_option("--out", erc.out, "Output prefix");

    MtildeArgs mt;
    auto* mt_cmd = app.add_subcommand("mtilde", "Monte Carlo value of the innovation MES");
    mt_cmd->add_option("--beta", mt.beta, "Probability level")->required();
    mt_cmd->add_option("--draws", mt.draws, "Draws");
    mt_cmd->add_option("--seed", mt.seed, "Seed (MESREG_SEED overrides)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kUsage;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit, out);
        if (*sim_cmd) {
            if (!sim.full_grid && sim_cmd->count("--beta") == 0) throw UsageError("--beta is required");
            return cmd_simulate(sim, out, err);
        }
        if (*dec_cmd) return cmd_decompose(dec, out);
        if (*brs_cmd) return cmd_brs(brs, out);
        if (*erc_cmd) return cmd_erc(erc, out);
        if (*mt_cmd) return cmd_mtilde(mt, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const Error& e) {
        err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kEstimationError;
    }
    return kUsage;
}

}  // namespace mesreg::cli
