#pragma once

#include <optional>

#include <Eigen/Dense>

namespace deepyc {

/// Standard normal CDF, Phi(z), computed through erfc for tail accuracy.
double normal_cdf(double z);

/// Inverse standard normal CDF to better than 1e-10 absolute accuracy,
/// computed by bisection plus Newton refinement on the error function.
/// Throws ConfigError for p outside (0, 1).
double normal_quantile(double p);

/// Pearson linear correlation of two equal-length series.
/// Returns nullopt when either series is (numerically) constant.
std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

/// Spearman rank correlation (average ranks on ties).
std::optional<double> spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y);

}  // namespace deepyc
