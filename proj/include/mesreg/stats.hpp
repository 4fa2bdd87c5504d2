#pragma once

#include <Eigen/Dense>

#include <span>

namespace mesreg::stats {

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);

/// Upper tail 1 - Phi(x), accurate for large x.
double normal_upper_tail(double x);

/// Sample median; even sizes average the two middle order statistics.
double median(std::span<const double> values);

/// Unscaled median absolute deviation from the sample median.
double mad(std::span<const double> values);

/// Order-statistic index k (1-based) of the type-1 empirical beta-quantile of
/// n points: the smallest k with k / n >= beta.
std::size_t type1_rank(std::size_t n, double beta);

/// Type-1 (left-continuous inverse ECDF) empirical quantile.
double quantile_type1(std::span<const double> values, double beta);

double mean(std::span<const double> values);

/// Sample standard deviation with n - 1 denominator.
double sample_sd(std::span<const double> values);

/// Ratio of extreme singular values; +inf for a singular (or zero) matrix.
double condition_number(const Eigen::MatrixXd& a);

}  // namespace mesreg::stats
