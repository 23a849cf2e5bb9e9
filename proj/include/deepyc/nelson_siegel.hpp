#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deepyc/curve_types.hpp"

namespace deepyc {

enum class CurveModel { NS, NSS };

inline int factor_count(CurveModel m) { return m == CurveModel::NS ? 3 : 4; }

/// Default per-month decay; puts the maximum of the curvature loading near 30 months.
inline constexpr double kDefaultLambda = 0.0609;
inline constexpr double kDefaultLambda2 = 0.2;

/// (1 - exp(-x)) / x, evaluated by Taylor expansion for small x to avoid
/// catastrophic cancellation. Defined as 1 at x = 0.
double slope_kernel(double x);

/// Level/slope/curvature loadings at tenor tau:
///   (1, (1-e^{-lt})/(lt), (1-e^{-lt})/(lt) - e^{-lt})  with lt = lambda*tau.
/// Requires tau > 0 and lambda > 0.
Eigen::Vector3d ns_loadings(double tau, double lambda);

/// Four-factor loadings: the first three equal ns_loadings(tau, lambda1) and
/// the fourth is the second curvature term driven by lambda2.
Eigen::Vector4d nss_loadings(double tau, double lambda1, double lambda2);

/// Design matrix of per-tenor loadings (M x 3 or M x 4).
/// `lambdas` holds one decay for NS and two for NSS.
Eigen::MatrixXd loading_matrix(const TenorGrid& grid, const Eigen::VectorXd& lambdas,
                               CurveModel model);

struct CurveFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd residuals;  // observed minus fitted, per tenor
};

/// Least-squares factor fit of a single curve with fixed decay(s), solved by
/// column-pivoted QR. Throws NumericError on a rank-deficient design (for
/// NSS this includes lambda1 == lambda2 up to 1e-8).
CurveFit fit_curve_ols(const Eigen::VectorXd& curve, const TenorGrid& grid,
                       const Eigen::VectorXd& lambdas, CurveModel model);

/// Per-family factor paths from cross-sectional fits.
struct FactorSeries {
    CurveFamily family;
    std::vector<std::string> dates;
    Eigen::MatrixXd values;   // dates x factors
    Eigen::VectorXd lambdas;  // fixed decay(s) used for every date
    double residual_sd = 0.0; // pooled across all of the family's residuals
};

/// Fits every (family, date) cross-section of the panel. residual_sd pools
/// the squared residuals over dates with T*(M - k) degrees of freedom.
std::vector<FactorSeries> fit_panel(const YieldPanel& panel, const Eigen::VectorXd& lambdas,
                                    CurveModel model);

/// Coarse grid search: returns the candidate decay vector with the smallest
/// pooled SSE over the whole panel.
Eigen::VectorXd search_lambdas(const YieldPanel& panel, CurveModel model,
                               const std::vector<Eigen::VectorXd>& candidates);

Eigen::VectorXd default_lambdas(CurveModel model);

/// CSV export, one row per (family, date):
/// family,date,beta0,...,lambda1[,lambda2],residual_sd
void write_factor_series_csv(const std::vector<FactorSeries>& series, const std::string& path,
                             const std::vector<std::string>& header_comments = {});

}  // namespace deepyc
