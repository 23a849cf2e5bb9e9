#include "deepyc/factor_dynamics.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "deepyc/errors.hpp"
#include "deepyc/stats.hpp"

namespace deepyc {

bool VARModel::stationary() const {
    return Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff() <
           1.0;
}

ARModel fit_ar(const Eigen::VectorXd& series) {
    const Eigen::Index T = series.size();
    if (T < 3) throw DataError("fit_ar: need at least 3 observations");

    const Eigen::Index n = T - 1;
    const Eigen::VectorXd x = series.head(n);   // lagged regressor
    const Eigen::VectorXd y = series.tail(n);   // response

    const double xbar = x.mean();
    const double ybar = y.mean();
    const Eigen::VectorXd xc = x.array() - xbar;
    const double sxx = xc.squaredNorm();
    // scale-aware constancy test on the lagged regressor
    if (sxx <= 1e-24 * static_cast<double>(n) *
                   std::max(1.0, xbar * xbar))
        throw DataError("fit_ar: constant series, slope is unidentified");

    ARModel m;
    m.psi1 = xc.dot(y) / sxx;
    m.psi0 = ybar - m.psi1 * xbar;

    const Eigen::VectorXd resid = y.array() - m.psi0 - m.psi1 * x.array();
    const double dof = static_cast<double>(T - 3);
    m.sigma_zeta = dof > 0 ? std::sqrt(resid.squaredNorm() / dof) : 0.0;
    return m;
}

VARModel fit_var(const Eigen::MatrixXd& series) {
    const Eigen::Index T = series.rows();
    const Eigen::Index k = series.cols();
    if (T < k + 2) throw DataError("fit_var: need at least k+2 observations");

    const Eigen::Index n = T - 1;
    Eigen::MatrixXd X(n, k + 1);
    X.col(0).setOnes();
    X.rightCols(k) = series.topRows(n);
    const Eigen::MatrixXd Y = series.bottomRows(n);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < k + 1) throw NumericError("fit_var: rank-deficient lagged design");

    const Eigen::MatrixXd B = qr.solve(Y);  // (k+1) x k, column j = equation j
    VARModel m;
    m.a0 = B.row(0).transpose();
    m.A = B.bottomRows(k).transpose();

    const Eigen::MatrixXd resid = Y - X * B;
    const double dof = static_cast<double>(n - (k + 1));
    m.E = dof > 0 ? Eigen::MatrixXd((resid.transpose() * resid) / dof)
                  : Eigen::MatrixXd::Zero(k, k);
    return m;
}

FactorForecast forecast_factors(const std::vector<ARModel>& models,
                                const Eigen::VectorXd& last) {
    if (static_cast<Eigen::Index>(models.size()) != last.size())
        throw ConfigError("forecast_factors: model count does not match state length");
    const Eigen::Index k = last.size();
    FactorForecast fc;
    fc.mean.resize(k);
    fc.cov = Eigen::MatrixXd::Zero(k, k);
    for (Eigen::Index j = 0; j < k; ++j) {
        const auto& m = models[static_cast<std::size_t>(j)];
        fc.mean(j) = m.psi0 + m.psi1 * last(j);
        fc.cov(j, j) = m.sigma_zeta * m.sigma_zeta;
    }
    return fc;
}

FactorForecast forecast_factors(const VARModel& model, const Eigen::VectorXd& last) {
    if (model.A.cols() != last.size())
        throw ConfigError("forecast_factors: state length does not match VAR dimension");
    return {model.a0 + model.A * last, model.E};
}

ForecastTriple benchmark_forecast(const FactorForecast& fc, const Eigen::VectorXd& lambdas,
                                  CurveModel model, const TenorGrid& grid, double residual_sd,
                                  double alpha, const std::string& family,
                                  const std::string& as_of) {
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("benchmark_forecast: alpha must lie in (0,1)");
    const Eigen::MatrixXd L = loading_matrix(grid, lambdas, model);
    const double z = normal_quantile(0.5 * (1.0 + alpha));

    ForecastTriple out;
    out.family = family;
    out.as_of = as_of;
    out.alpha = alpha;
    out.central = L * fc.mean;
    const Eigen::Index M = L.rows();
    out.lower.resize(M);
    out.upper.resize(M);
    Eigen::VectorXd sd(M);
    for (Eigen::Index i = 0; i < M; ++i) {
        const double var = L.row(i) * fc.cov * L.row(i).transpose() + residual_sd * residual_sd;
        sd(i) = std::sqrt(std::max(var, 0.0));
        out.lower(i) = out.central(i) - z * sd(i);
        out.upper(i) = out.central(i) + z * sd(i);
    }
    out.sd = sd;
    out.validate();
    return out;
}

}  // namespace deepyc
