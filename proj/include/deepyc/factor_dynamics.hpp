#pragma once

#include <vector>

#include <Eigen/Dense>

#include "deepyc/forecast.hpp"
#include "deepyc/nelson_siegel.hpp"

namespace deepyc {

/// First-order autoregression x_t = psi0 + psi1 * x_{t-1} + zeta_t.
struct ARModel {
    double psi0 = 0.0;
    double psi1 = 0.0;
    double sigma_zeta = 0.0;
    bool stationary() const { return std::abs(psi1) < 1.0; }
};

/// First-order vector autoregression x_t = a0 + A x_{t-1} + eta_t,
/// eta ~ N(0, E).
struct VARModel {
    Eigen::VectorXd a0;
    Eigen::MatrixXd A;
    Eigen::MatrixXd E;
    bool stationary() const;
};

/// OLS fit of x_t on (1, x_{t-1}). sigma_zeta uses denominator T-3 (regression
/// rows minus two parameters). Throws DataError for T < 3 or a constant series.
/// One-step forecasts stay well-defined for non-stationary fits; callers can
/// inspect stationary() to warn.
ARModel fit_ar(const Eigen::VectorXd& series);

/// Per-equation OLS of the k-variate lagged regression; E is the residual
/// covariance with denominator T-k-2. Requires T >= k+2 and a full-rank
/// lagged design.
VARModel fit_var(const Eigen::MatrixXd& series);

struct FactorForecast {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

/// Stacked univariate forecasts: mean_j = psi0_j + psi1_j * last_j with a
/// diagonal covariance of innovation variances.
FactorForecast forecast_factors(const std::vector<ARModel>& models,
                                const Eigen::VectorXd& last);

/// mean = a0 + A * last, cov = E.
FactorForecast forecast_factors(const VARModel& model, const Eigen::VectorXd& last);

/// Gaussian interval forecast of the curve implied by a factor forecast:
///   central(tau) = loadings(tau) . mean
///   var(tau)     = loadings(tau)' cov loadings(tau) + residual_sd^2
///   bounds       = central -/+ z_{(1+alpha)/2} * sd(tau).
/// The measurement term residual_sd^2 makes this the exact one-step predictive
/// variance when factors and observation noise are Gaussian.
ForecastTriple benchmark_forecast(const FactorForecast& fc, const Eigen::VectorXd& lambdas,
                                  CurveModel model, const TenorGrid& grid, double residual_sd,
                                  double alpha, const std::string& family,
                                  const std::string& as_of);

}  // namespace deepyc
