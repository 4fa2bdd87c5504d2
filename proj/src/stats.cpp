#include "mesreg/stats.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace mesreg::stats {

namespace {
const boost::math::normal_distribution<double> kStandardNormal(0.0, 1.0);
}

double normal_pdf(double x) { return boost::math::pdf(kStandardNormal, x); }

double normal_cdf(double x) { return boost::math::cdf(kStandardNormal, x); }

double normal_upper_tail(double x) { return boost::math::cdf(boost::math::complement(kStandardNormal, x)); }

double normal_quantile(double p) { return boost::math::quantile(kStandardNormal, p); }

double median(std::span<const double> values) {
    std::vector<double> v(values.begin(), values.end());
    const std::size_t n = v.size();
    if (n == 0) return std::numeric_limits<double>::quiet_NaN();
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(v.begin(), mid, v.end());
    const double upper = *mid;
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(v.begin(), mid);
    return 0.5 * (lower + upper);
}

double mad(std::span<const double> values) {
    const double center = median(values);
    std::vector<double> dev(values.size());
    std::transform(values.begin(), values.end(), dev.begin(), [center](double v) { return std::abs(v - center); });
    return median(dev);
}

std::size_t type1_rank(std::size_t n, double beta) {
    // Guard against beta * n landing a hair above an integer (0.95 * 100).
    const double target = beta * static_cast<double>(n) - 1e-9;
    auto k = static_cast<std::size_t>(std::ceil(target));
    return std::clamp<std::size_t>(k, 1, n);
}

double quantile_type1(std::span<const double> values, double beta) {
    std::vector<double> v(values.begin(), values.end());
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    const auto k = type1_rank(v.size(), beta);
    const auto kth = v.begin() + static_cast<std::ptrdiff_t>(k - 1);
    std::nth_element(v.begin(), kth, v.end());
    return *kth;
}

double mean(std::span<const double> values) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_sd(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(n - 1));
}

double condition_number(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return std::numeric_limits<double>::infinity();
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    const auto& s = svd.singularValues();
    const double smax = s(0);
    const double smin = s(s.size() - 1);
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return smax / smin;
}

}  // namespace mesreg::stats
