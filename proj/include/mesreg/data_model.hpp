#pragma once

#include <Eigen/Dense>

#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mesreg {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Boolean per-observation flag (e.g. VaR exceedances).
using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;

enum class ErrorCode {
    schema,
    parse,
    dimension,
    level,
    non_finite,
    link,
    io,
    convergence,
    singularity,
    insufficient_exceedances,
    degenerate_bandwidth,
    inference_unavailable,
    window,
    update_domain,
    numeric,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

/// Optimizer gave up; the last iterate is kept for inspection.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& message, VectorXd last_iterate);

    [[nodiscard]] const VectorXd& last_iterate() const noexcept { return last_iterate_; }

private:
    VectorXd last_iterate_;
};

/**
 * Model link for either the VaR or the MES part.
 *
 * The linear link evaluates z'theta and has the covariate row as gradient; its
 * dimension follows the covariate matrix. A custom link supplies value and
 * gradient evaluators, a fixed parameter dimension and a starting point (the
 * optimizers need one for nonlinear problems).
 */
class Link {
public:
    using Value = std::function<double(const VectorXd& z, const VectorXd& theta)>;
    using Gradient = std::function<VectorXd(const VectorXd& z, const VectorXd& theta)>;

    static Link linear();
    static Link custom(int dim, Value value, Gradient gradient, VectorXd start);

    [[nodiscard]] bool is_linear() const noexcept { return linear_; }
    /// Parameter dimension; 0 for the linear link (taken from the data).
    [[nodiscard]] int dim() const noexcept { return dim_; }
    [[nodiscard]] const VectorXd& start() const noexcept { return start_; }
    [[nodiscard]] bool has_evaluators() const noexcept { return bool(value_) && bool(gradient_); }

    /// Row-wise evaluation, one entry per row of z.
    [[nodiscard]] VectorXd evaluate(const MatrixXd& z, const VectorXd& theta) const;
    /// Gradients stacked as rows (n x dim).
    [[nodiscard]] MatrixXd jacobian(const MatrixXd& z, const VectorXd& theta) const;

private:
    bool linear_ = true;
    int dim_ = 0;
    Value value_;
    Gradient gradient_;
    VectorXd start_;
};

struct Dataset {
    VectorXd y;    // outcome
    VectorXd x;    // distress variable
    MatrixXd z_v;  // VaR covariates, n x p
    MatrixXd z_m;  // MES covariates, n x q
    bool intercept_v = false;
    bool intercept_m = false;
    std::vector<std::string> z_v_names;
    std::vector<std::string> z_m_names;

    [[nodiscard]] int n() const noexcept { return static_cast<int>(y.size()); }
};

/// Build a dataset from in-memory arrays (no intercept columns added).
Dataset make_dataset(VectorXd y, VectorXd x, MatrixXd z_v, MatrixXd z_m);

struct ModelSpec {
    double beta = 0.9;
    Link var_link = Link::linear();
    Link mes_link = Link::linear();
    int p = 0;
    int q = 0;

    /// Linear links with dimensions taken from the dataset.
    static ModelSpec linear(double beta, const Dataset& data);
};

/// Plug-in matrices of the asymptotic covariance.
struct FitDiagnostics {
    MatrixXd v;        // p x p
    MatrixXd lambda;   // p x p, kernel density-weighted
    MatrixXd m_star;   // q x q
    MatrixXd lambda1;  // q x q
    MatrixXd lambda2;  // q x p
    double cond_lambda = 0.0;
    double cond_lambda1 = 0.0;
    int kernel_count = 0;  // observations inside the bandwidth window
};

/**
 * Result of the two-step (VaR, MES) fit.
 *
 * `avar` is the asymptotic matrix Gamma M Gamma' of sqrt(n)(theta_hat - theta0);
 * the finite-sample covariance is avar / n. Inference fields are empty when the
 * plug-in matrices could not be inverted, with the reason in `warnings`.
 */
struct JointFit {
    VectorXd theta_v;
    VectorXd theta_m;
    std::optional<double> bandwidth;
    std::optional<MatrixXd> avar;
    std::optional<VectorXd> se;
    std::optional<FitDiagnostics> diagnostics;
    int n = 0;
    int exceedance_count = 0;
    int ties = 0;
    bool converged = false;
    std::pair<double, double> loss_values{0.0, 0.0};
    std::vector<std::string> warnings;

    [[nodiscard]] bool has_inference() const noexcept { return avar.has_value(); }
    [[nodiscard]] VectorXd estimates() const;
};

/// Column roles for CSV ingestion. The token "1" requests an intercept column.
struct CsvSchema {
    std::string y;
    std::string x;
    std::vector<std::string> z_v;
    std::vector<std::string> z_m;
};

inline constexpr std::string_view kInterceptToken = "1";

/// Parse a comma-separated covariate list such as "1,z1,z2".
std::vector<std::string> split_columns(std::string_view list);

/// Header row plus numeric columns, by name.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    [[nodiscard]] std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
    [[nodiscard]] const std::vector<double>& column(std::string_view name) const;
    [[nodiscard]] bool has_column(std::string_view name) const;
};

/// Reads a numeric CSV. Only columns named in `wanted` are parsed (all if empty).
CsvTable read_csv_table(const std::string& path, const std::vector<std::string>& wanted = {});

/// Only an empty file is rejected for size; n >= p + q + 1 is checked by validate().
Dataset load_csv(const std::string& path, const CsvSchema& schema);
Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema);

/// Writes y, x and all covariate columns with 17 significant digits.
void write_csv(const Dataset& data, std::ostream& out);
void write_csv(const Dataset& data, const std::string& path);

/// Schema matching the column names produced by write_csv.
CsvSchema written_schema(const Dataset& data);

/// Checks all Dataset and ModelSpec invariants; throws Error on the first violation.
void validate(const Dataset& data, const ModelSpec& spec);

}  // namespace mesreg
