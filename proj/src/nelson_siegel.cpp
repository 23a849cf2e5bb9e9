#include "deepyc/nelson_siegel.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "deepyc/errors.hpp"

namespace deepyc {

double slope_kernel(double x) {
    if (std::abs(x) < 1e-4) {
        // 6-term expansion of (1 - e^{-x})/x = sum_k (-x)^k / (k+1)!
        double term = 1.0, sum = 1.0;
        for (int k = 1; k <= 5; ++k) {
            term *= -x / (k + 1);
            sum += term;
        }
        return sum;
    }
    return (1.0 - std::exp(-x)) / x;
}

Eigen::Vector3d ns_loadings(double tau, double lambda) {
    if (!(tau > 0.0) || !(lambda > 0.0))
        throw ConfigError("ns_loadings: tau and lambda must be positive");
    const double x = lambda * tau;
    const double s = slope_kernel(x);
    return {1.0, s, s - std::exp(-x)};
}

Eigen::Vector4d nss_loadings(double tau, double lambda1, double lambda2) {
    if (!(tau > 0.0) || !(lambda1 > 0.0) || !(lambda2 > 0.0))
        throw ConfigError("nss_loadings: tau and lambdas must be positive");
    const Eigen::Vector3d base = ns_loadings(tau, lambda1);
    const double x2 = lambda2 * tau;
    const double c2 = slope_kernel(x2) - std::exp(-x2);
    return {base(0), base(1), base(2), c2};
}

Eigen::MatrixXd loading_matrix(const TenorGrid& grid, const Eigen::VectorXd& lambdas,
                               CurveModel model) {
    const int k = factor_count(model);
    if (lambdas.size() != (model == CurveModel::NS ? 1 : 2))
        throw ConfigError("loading_matrix: wrong number of decay parameters");
    Eigen::MatrixXd L(grid.tenors.size(), k);
    for (Eigen::Index i = 0; i < grid.tenors.size(); ++i) {
        if (model == CurveModel::NS)
            L.row(i) = ns_loadings(grid.tenors(i), lambdas(0)).transpose();
        else
            L.row(i) = nss_loadings(grid.tenors(i), lambdas(0), lambdas(1)).transpose();
    }
    return L;
}

CurveFit fit_curve_ols(const Eigen::VectorXd& curve, const TenorGrid& grid,
                       const Eigen::VectorXd& lambdas, CurveModel model) {
    const int k = factor_count(model);
    if (curve.size() != grid.tenors.size())
        throw DataError("fit_curve_ols: curve length does not match tenor grid");
    if (curve.size() < k)
        throw DataError("fit_curve_ols: need at least as many tenors as factors");
    if (model == CurveModel::NSS && std::abs(lambdas(0) - lambdas(1)) < 1e-8)
        throw NumericError("fit_curve_ols: NSS decays coincide, design is rank deficient");

    const Eigen::MatrixXd X = loading_matrix(grid, lambdas, model);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < k) throw NumericError("fit_curve_ols: rank-deficient loading matrix");

    CurveFit fit;
    fit.beta = qr.solve(curve);
    fit.residuals = curve - X * fit.beta;
    return fit;
}

std::vector<FactorSeries> fit_panel(const YieldPanel& panel, const Eigen::VectorXd& lambdas,
                                    CurveModel model) {
    panel.validate();
    const int k = factor_count(model);
    const int T = panel.n_dates();
    const int M = panel.n_tenors();

    std::vector<FactorSeries> out;
    out.reserve(panel.families.size());
    for (int f = 0; f < panel.n_families(); ++f) {
        FactorSeries fs;
        fs.family = panel.families[static_cast<std::size_t>(f)];
        fs.dates = panel.dates;
        fs.values.resize(T, k);
        fs.lambdas = lambdas;
        double sse = 0.0;
        for (int t = 0; t < T; ++t) {
            try {
                CurveFit fit = fit_curve_ols(
                    panel.rates[static_cast<std::size_t>(f)].row(t).transpose(), panel.grid,
                    lambdas, model);
                fs.values.row(t) = fit.beta.transpose();
                sse += fit.residuals.squaredNorm();
            } catch (const NumericError& e) {
                throw NumericError("fit_panel: family '" + fs.family.id + "', date '" +
                                   panel.dates[static_cast<std::size_t>(t)] + "': " + e.what());
            }
        }
        const double dof = static_cast<double>(T) * (M - k);
        fs.residual_sd = dof > 0 ? std::sqrt(sse / dof) : 0.0;
        out.push_back(std::move(fs));
    }
    return out;
}

Eigen::VectorXd search_lambdas(const YieldPanel& panel, CurveModel model,
                               const std::vector<Eigen::VectorXd>& candidates) {
    if (candidates.empty()) throw ConfigError("search_lambdas: empty candidate set");
    double best_sse = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best = candidates.front();
    for (const auto& cand : candidates) {
        double sse = 0.0;
        bool ok = true;
        try {
            for (int f = 0; f < panel.n_families() && ok; ++f)
                for (int t = 0; t < panel.n_dates(); ++t) {
                    CurveFit fit = fit_curve_ols(
                        panel.rates[static_cast<std::size_t>(f)].row(t).transpose(),
                        panel.grid, cand, model);
                    sse += fit.residuals.squaredNorm();
                }
        } catch (const NumericError&) {
            ok = false;  // degenerate candidate, skip
        }
        if (ok && sse < best_sse) {
            best_sse = sse;
            best = cand;
        }
    }
    return best;
}

Eigen::VectorXd default_lambdas(CurveModel model) {
    if (model == CurveModel::NS) {
        Eigen::VectorXd l(1);
        l << kDefaultLambda;
        return l;
    }
    Eigen::VectorXd l(2);
    l << kDefaultLambda, kDefaultLambda2;
    return l;
}

void write_factor_series_csv(const std::vector<FactorSeries>& series, const std::string& path,
                             const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const auto& c : header_comments) out << "# " << c << "\n";

    const int k = series.empty() ? 3 : static_cast<int>(series.front().values.cols());
    out << "family,date";
    for (int j = 0; j < k; ++j) out << ",beta" << j;
    out << ",lambda1";
    if (k == 4) out << ",lambda2";
    out << ",residual_sd\n";
    for (const auto& fs : series) {
        for (Eigen::Index t = 0; t < fs.values.rows(); ++t) {
            out << fs.family.id << ',' << fs.dates[static_cast<std::size_t>(t)];
            for (int j = 0; j < k; ++j) out << ',' << fs.values(t, j);
            for (Eigen::Index j = 0; j < fs.lambdas.size(); ++j) out << ',' << fs.lambdas(j);
            out << ',' << fs.residual_sd << '\n';
        }
    }
}

}  // namespace deepyc
