#include "mesreg/data_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace mesreg {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::schema: return "schema error";
        case ErrorCode::parse: return "parse error";
        case ErrorCode::dimension: return "dimension error";
        case ErrorCode::level: return "level error";
        case ErrorCode::non_finite: return "non-finite value";
        case ErrorCode::link: return "link error";
        case ErrorCode::io: return "i/o error";
        case ErrorCode::convergence: return "convergence error";
        case ErrorCode::singularity: return "singularity error";
        case ErrorCode::insufficient_exceedances: return "insufficient exceedances";
        case ErrorCode::degenerate_bandwidth: return "degenerate bandwidth";
        case ErrorCode::inference_unavailable: return "inference unavailable";
        case ErrorCode::window: return "window error";
        case ErrorCode::update_domain: return "update-domain error";
        case ErrorCode::numeric: return "numeric error";
    }
    return "error";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

ConvergenceError::ConvergenceError(const std::string& message, VectorXd last_iterate)
    : Error(ErrorCode::convergence, message), last_iterate_(std::move(last_iterate)) {}

// ---------------------------------------------------------------------------
// Link

Link Link::linear() { return Link{}; }

Link Link::custom(int dim, Value value, Gradient gradient, VectorXd start) {
    Link link;
    link.linear_ = false;
    link.dim_ = dim;
    link.value_ = std::move(value);
    link.gradient_ = std::move(gradient);
    link.start_ = std::move(start);
    return link;
}

VectorXd Link::evaluate(const MatrixXd& z, const VectorXd& theta) const {
    if (linear_) {
        if (z.cols() != theta.size()) {
            throw Error(ErrorCode::dimension, "covariate columns (" + std::to_string(z.cols()) +
                                                  ") do not match parameter length (" +
                                                  std::to_string(theta.size()) + ")");
        }
        return z * theta;
    }
    VectorXd out(z.rows());
    VectorXd row(z.cols());
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
        row = z.row(t).transpose();
        out(t) = value_(row, theta);
    }
    return out;
}

MatrixXd Link::jacobian(const MatrixXd& z, const VectorXd& theta) const {
    if (linear_) {
        return z;
    }
    MatrixXd out(z.rows(), theta.size());
    VectorXd row(z.cols());
    for (Eigen::Index t = 0; t < z.rows(); ++t) {
        row = z.row(t).transpose();
        const VectorXd g = gradient_(row, theta);
        if (g.size() != theta.size()) {
            throw Error(ErrorCode::link, "gradient length " + std::to_string(g.size()) +
                                             " differs from parameter length " +
                                             std::to_string(theta.size()));
        }
        out.row(t) = g.transpose();
    }
    return out;
}

VectorXd JointFit::estimates() const {
    VectorXd out(theta_v.size() + theta_m.size());
    out << theta_v, theta_m;
    return out;
}

Dataset make_dataset(VectorXd y, VectorXd x, MatrixXd z_v, MatrixXd z_m) {
    Dataset data;
    data.y = std::move(y);
    data.x = std::move(x);
    data.z_v = std::move(z_v);
    data.z_m = std::move(z_m);
    for (Eigen::Index j = 0; j < data.z_v.cols(); ++j) data.z_v_names.push_back("zv" + std::to_string(j));
    for (Eigen::Index j = 0; j < data.z_m.cols(); ++j) data.z_m_names.push_back("zm" + std::to_string(j));
    return data;
}

ModelSpec ModelSpec::linear(double beta, const Dataset& data) {
    ModelSpec spec;
    spec.beta = beta;
    spec.p = static_cast<int>(data.z_v.cols());
    spec.q = static_cast<int>(data.z_m.cols());
    return spec;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    s = s.substr(first, last - first + 1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string_view> split_line(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(trim(line.substr(start)));
            break;
        }
        fields.push_back(trim(line.substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

std::string intercept_name() { return "const"; }

MatrixXd covariates(const CsvTable& table, const std::vector<std::string>& names, std::size_t n,
                    bool& intercept, std::vector<std::string>& labels, const char* part) {
    if (names.empty()) {
        throw Error(ErrorCode::schema, std::string("no covariates given for the ") + part +
                                           " part (use \"1\" for intercept-only)");
    }
    intercept = std::find(names.begin(), names.end(), kInterceptToken) != names.end();
    std::vector<const std::vector<double>*> cols;
    labels.clear();
    if (intercept) labels.push_back(intercept_name());
    for (const auto& name : names) {
        if (name == kInterceptToken) continue;
        cols.push_back(&table.column(name));
        labels.push_back(name);
    }
    const auto k = static_cast<Eigen::Index>(cols.size() + (intercept ? 1 : 0));
    MatrixXd z(static_cast<Eigen::Index>(n), k);
    Eigen::Index j = 0;
    if (intercept) z.col(j++).setOnes();
    for (const auto* col : cols) {
        for (std::size_t t = 0; t < n; ++t) z(static_cast<Eigen::Index>(t), j) = (*col)[t];
        ++j;
    }
    return z;
}

}  // namespace

std::vector<std::string> split_columns(std::string_view list) {
    std::vector<std::string> out;
    for (auto field : split_line(list)) {
        if (!field.empty()) out.emplace_back(field);
    }
    return out;
}

bool CsvTable::has_column(std::string_view name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
}

const std::vector<double>& CsvTable::column(std::string_view name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
        throw Error(ErrorCode::schema, "column '" + std::string(name) + "' not found in header");
    }
    const auto& col = columns[static_cast<std::size_t>(it - header.begin())];
    if (col.empty() && rows() > 0) {
        throw Error(ErrorCode::schema, "column '" + std::string(name) + "' was not loaded");
    }
    return col;
}

CsvTable read_csv_table(const std::string& path, const std::vector<std::string>& wanted) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::io, "cannot open '" + path + "'");
    }
    CsvTable table;
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::parse, "'" + path + "' is empty (a header row is required)");
    }
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
    for (auto field : split_line(line)) table.header.emplace_back(field);
    for (const auto& name : wanted) {
        if (!table.has_column(name)) {
            throw Error(ErrorCode::schema, "column '" + name + "' not found in header of '" + path + "'");
        }
    }

    std::vector<bool> keep(table.header.size(), wanted.empty());
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (std::find(wanted.begin(), wanted.end(), table.header[j]) != wanted.end()) keep[j] = true;
    }
    table.columns.resize(table.header.size());

    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const auto fields = split_line(line);
        if (fields.size() != table.header.size()) {
            throw Error(ErrorCode::parse, "row " + std::to_string(row) + " has " +
                                              std::to_string(fields.size()) + " fields, header has " +
                                              std::to_string(table.header.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (!keep[j]) continue;
            const auto field = fields[j];
            double value = 0.0;
            const auto* first = field.data();
            const auto* last = field.data() + field.size();
            if (!field.empty() && *first == '+') ++first;
            const auto [ptr, ec] = std::from_chars(first, last, value);
            if (field.empty() || ec != std::errc{} || ptr != last) {
                throw Error(ErrorCode::parse, "row " + std::to_string(row) + ", column '" +
                                                  table.header[j] + "': '" + std::string(field) +
                                                  "' is not a number");
            }
            if (!std::isfinite(value)) {
                throw Error(ErrorCode::parse, "row " + std::to_string(row) + ", column '" +
                                                  table.header[j] + "': non-finite value '" +
                                                  std::string(field) + "'");
            }
            table.columns[j].push_back(value);
        }
    }
    return table;
}

Dataset dataset_from_table(const CsvTable& table, const CsvSchema& schema) {
    if (schema.y.empty() || schema.x.empty()) {
        throw Error(ErrorCode::schema, "both a y column and an x column must be named");
    }
    const std::size_t n = table.rows();
    Dataset data;
    const auto& y = table.column(schema.y);
    const auto& x = table.column(schema.x);
    data.y = Eigen::Map<const VectorXd>(y.data(), static_cast<Eigen::Index>(n));
    data.x = Eigen::Map<const VectorXd>(x.data(), static_cast<Eigen::Index>(n));
    data.z_v = covariates(table, schema.z_v, n, data.intercept_v, data.z_v_names, "VaR");
    data.z_m = covariates(table, schema.z_m, n, data.intercept_m, data.z_m_names, "MES");

    if (n == 0) throw Error(ErrorCode::dimension, "no data rows");
    return data;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::vector<std::string> wanted{schema.y, schema.x};
    for (const auto* part : {&schema.z_v, &schema.z_m}) {
        for (const auto& name : *part) {
            if (name != kInterceptToken) wanted.push_back(name);
        }
    }
    wanted.erase(std::remove(wanted.begin(), wanted.end(), std::string{}), wanted.end());
    return dataset_from_table(read_csv_table(path, wanted), schema);
}

namespace {

std::string written_name(const std::string& prefix, const std::string& name) { return prefix + name; }

void write_number(std::ostream& out, double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    out << buf;
}

}  // namespace

void write_csv(const Dataset& data, std::ostream& out) {
    out << "y,x";
    for (const auto& name : data.z_v_names) out << ',' << written_name("zv_", name);
    for (const auto& name : data.z_m_names) out << ',' << written_name("zm_", name);
    out << '\n';
    for (Eigen::Index t = 0; t < data.y.size(); ++t) {
        write_number(out, data.y(t));
        out << ',';
        write_number(out, data.x(t));
        for (Eigen::Index j = 0; j < data.z_v.cols(); ++j) {
            out << ',';
            write_number(out, data.z_v(t, j));
        }
        for (Eigen::Index j = 0; j < data.z_m.cols(); ++j) {
            out << ',';
            write_number(out, data.z_m(t, j));
        }
        out << '\n';
    }
}

void write_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io, "cannot write '" + path + "'");
    write_csv(data, out);
}

CsvSchema written_schema(const Dataset& data) {
    CsvSchema schema;
    schema.y = "y";
    schema.x = "x";
    for (const auto& name : data.z_v_names) schema.z_v.push_back(written_name("zv_", name));
    for (const auto& name : data.z_m_names) schema.z_m.push_back(written_name("zm_", name));
    return schema;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_link(const Link& link, int dim, const MatrixXd& z, const char* part) {
    if (link.is_linear()) {
        if (dim != z.cols()) {
            throw Error(ErrorCode::dimension, std::string(part) + " parameter dimension " +
                                                  std::to_string(dim) + " differs from " +
                                                  std::to_string(z.cols()) + " covariate columns");
        }
        return;
    }
    if (!link.has_evaluators()) {
        throw Error(ErrorCode::link, std::string(part) + " link lacks a value or gradient evaluator");
    }
    if (link.dim() != dim || link.start().size() != dim) {
        throw Error(ErrorCode::link, std::string(part) + " link dimension/start length differs from " +
                                         std::to_string(dim));
    }
    if (z.rows() > 0) {
        // jacobian() rejects gradients of the wrong length; one row is enough here.
        (void)link.jacobian(z.topRows(1), link.start());
    }
}

}  // namespace

void validate(const Dataset& data, const ModelSpec& spec) {
    if (!(spec.beta > 0.0 && spec.beta < 1.0)) {
        throw Error(ErrorCode::level, "beta must lie strictly between 0 and 1");
    }
    const auto n = data.y.size();
    if (n == 0) throw Error(ErrorCode::dimension, "dataset is empty");
    if (data.x.size() != n || data.z_v.rows() != n || data.z_m.rows() != n) {
        throw Error(ErrorCode::dimension, "y, x, z_v and z_m must have the same number of rows");
    }
    if (!data.y.allFinite() || !data.x.allFinite() || !data.z_v.allFinite() || !data.z_m.allFinite()) {
        throw Error(ErrorCode::non_finite, "dataset contains NaN or infinite entries");
    }
    if (data.intercept_v && (data.z_v.cols() == 0 || (data.z_v.col(0).array() != 1.0).any())) {
        throw Error(ErrorCode::schema, "first VaR covariate column must be the intercept (all ones)");
    }
    if (data.intercept_m && (data.z_m.cols() == 0 || (data.z_m.col(0).array() != 1.0).any())) {
        throw Error(ErrorCode::schema, "first MES covariate column must be the intercept (all ones)");
    }
    if (spec.p <= 0 || spec.q <= 0) {
        throw Error(ErrorCode::dimension, "parameter dimensions p and q must be positive");
    }
    check_link(spec.var_link, spec.p, data.z_v, "VaR");
    check_link(spec.mes_link, spec.q, data.z_m, "MES");
    if (n < spec.p + spec.q + 1) {
        throw Error(ErrorCode::dimension, "n = " + std::to_string(n) + " is below p + q + 1 = " +
                                              std::to_string(spec.p + spec.q + 1));
    }
}

}  // namespace mesreg
