#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "deepyc/curve_data.hpp"
#include "deepyc/errors.hpp"
#include "deepyc/nelson_siegel.hpp"
#include "deepyc/random.hpp"

using namespace deepyc;

namespace {

// closed-form loading evaluation, independent of the library path
double slope_oracle(double tau, double lambda) {
    const double x = lambda * tau;
    return -std::expm1(-x) / x;
}

double curvature_oracle(double tau, double lambda) {
    return slope_oracle(tau, lambda) - std::exp(-lambda * tau);
}

TenorGrid grid_1_to(int m) {
    std::vector<double> tenors;
    for (int i = 1; i <= m; ++i) tenors.push_back(i);
    return make_tenor_grid(tenors);
}

}  // namespace

TEST_CASE("loadings at lambda=1, tau=1") {
    const Eigen::Vector3d l = ns_loadings(1.0, 1.0);
    CHECK(l(0) == 1.0);
    CHECK(l(1) == doctest::Approx(0.63212055882855767).epsilon(1e-12));
    CHECK(l(2) == doctest::Approx(0.26424111765711533).epsilon(1e-12));
    CHECK(l(1) == doctest::Approx(slope_oracle(1.0, 1.0)).epsilon(1e-14));
    CHECK(l(2) == doctest::Approx(curvature_oracle(1.0, 1.0)).epsilon(1e-14));
}

TEST_CASE("short- and long-maturity limits") {
    const Eigen::Vector3d near_zero = ns_loadings(1e-8, 1.0);
    CHECK(near_zero(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(near_zero(1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(near_zero(2)) < 1e-6);

    const Eigen::Vector3d far = ns_loadings(1e6, 0.0609);
    CHECK(far(0) == 1.0);
    CHECK(std::abs(far(1)) < 1e-4);
    CHECK(std::abs(far(2)) < 1e-4);
}

TEST_CASE("level loading is identically one") {
    RngStream rng(21, "loadings");
    for (int i = 0; i < 200; ++i) {
        const double tau = rng.uniform(1e-6, 400.0);
        const double lambda = rng.uniform(1e-4, 3.0);
        CHECK(ns_loadings(tau, lambda)(0) == 1.0);
        CHECK(nss_loadings(tau, lambda, 2.0 * lambda)(0) == 1.0);
    }
}

TEST_CASE("slope decreasing, curvature unimodal over a dense tenor grid") {
    const double lambda = 0.0609;
    double prev_slope = 2.0;
    std::vector<double> curvature;
    for (double tau = 0.5; tau <= 300.0; tau += 0.5) {
        const Eigen::Vector3d l = ns_loadings(tau, lambda);
        CHECK(l(1) < prev_slope);
        prev_slope = l(1);
        curvature.push_back(l(2));
    }
    // single interior maximum: rises then falls
    std::size_t peak = 0;
    for (std::size_t i = 1; i < curvature.size(); ++i)
        if (curvature[i] > curvature[peak]) peak = i;
    CHECK(peak > 0);
    CHECK(peak < curvature.size() - 1);
    for (std::size_t i = 0; i < peak; ++i) CHECK(curvature[i] < curvature[i + 1]);
    for (std::size_t i = peak; i + 1 < curvature.size(); ++i)
        CHECK(curvature[i] > curvature[i + 1]);
}

TEST_CASE("slope kernel is smooth across the series branch") {
    // series branch engages below 1e-4
    const double left = slope_kernel(1e-4 * (1.0 - 1e-10));
    const double right = slope_kernel(1e-4 * (1.0 + 1e-10));
    CHECK(left == doctest::Approx(right).epsilon(1e-13));
    const long double x = 1e-5L;
    const long double exact = (1.0L - std::exp(-x)) / x;
    CHECK(slope_kernel(1e-5) == doctest::Approx(static_cast<double>(exact)).epsilon(1e-14));
}

TEST_CASE("second curvature term") {
    const Eigen::Vector4d l = nss_loadings(1.0, 1.0, 2.0);
    // (1 - e^{-2})/2 - e^{-2}
    const double expected = -std::expm1(-2.0) / 2.0 - std::exp(-2.0);
    CHECK(l(3) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(l(3) == doctest::Approx(0.29699707514508).epsilon(1e-12));

    const Eigen::Vector4d same = nss_loadings(7.0, 0.4, 0.4);
    CHECK(same(3) == same(2));

    const Eigen::Vector4d near_zero = nss_loadings(1e-8, 1.0, 2.0);
    CHECK(near_zero(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(near_zero(1) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(near_zero(2)) < 1e-6);
    CHECK(std::abs(near_zero(3)) < 1e-6);
}

TEST_CASE("non-positive inputs rejected") {
    CHECK_THROWS_AS(ns_loadings(0.0, 1.0), ConfigError);
    CHECK_THROWS_AS(ns_loadings(1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(nss_loadings(1.0, 1.0, -1.0), ConfigError);
}

TEST_CASE("exact factor recovery from a noiseless curve") {
    const TenorGrid grid = grid_1_to(12);
    Eigen::VectorXd lambdas(1);
    lambdas << 0.0609;
    const Eigen::Vector3d beta(0.03, -0.01, 0.005);
    const Eigen::VectorXd curve = loading_matrix(grid, lambdas, CurveModel::NS) * beta;

    const CurveFit fit = fit_curve_ols(curve, grid, lambdas, CurveModel::NS);
    CHECK((fit.beta - beta).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("flat curve maps to a pure level factor") {
    const TenorGrid grid = grid_1_to(10);
    Eigen::VectorXd lambdas(1);
    lambdas << 0.0609;
    const Eigen::VectorXd curve = Eigen::VectorXd::Constant(10, 0.02);
    const CurveFit fit = fit_curve_ols(curve, grid, lambdas, CurveModel::NS);
    CHECK(fit.beta(0) == doctest::Approx(0.02).epsilon(1e-10));
    CHECK(std::abs(fit.beta(1)) < 1e-10);
    CHECK(std::abs(fit.beta(2)) < 1e-10);

    // normal-equation oracle
    const Eigen::MatrixXd X = loading_matrix(grid, lambdas, CurveModel::NS);
    const Eigen::Vector3d oracle =
        (X.transpose() * X).ldlt().solve(X.transpose() * curve);
    CHECK((fit.beta - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("least squares agrees with a row-permuted solve") {
    const TenorGrid grid = grid_1_to(9);
    Eigen::VectorXd lambdas(1);
    lambdas << 0.0609;
    RngStream rng(5, "perm");
    Eigen::VectorXd curve(9);
    for (int i = 0; i < 9; ++i) curve(i) = 0.02 + 0.002 * rng.normal();

    const CurveFit fit = fit_curve_ols(curve, grid, lambdas, CurveModel::NS);

    const Eigen::MatrixXd X = loading_matrix(grid, lambdas, CurveModel::NS);
    std::vector<int> perm = {4, 1, 8, 0, 2, 7, 5, 3, 6};
    Eigen::MatrixXd Xp(9, 3);
    Eigen::VectorXd yp(9);
    for (int i = 0; i < 9; ++i) {
        Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
        yp(i) = curve(perm[static_cast<std::size_t>(i)]);
    }
    const Eigen::Vector3d permuted = Xp.colPivHouseholderQr().solve(yp);
    CHECK((fit.beta - permuted).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("coincident decays are rejected") {
    const TenorGrid grid = grid_1_to(8);
    Eigen::VectorXd lambdas(2);
    lambdas << 0.1, 0.1;
    const Eigen::VectorXd curve = Eigen::VectorXd::Constant(8, 0.02);
    CHECK_THROWS_AS(fit_curve_ols(curve, grid, lambdas, CurveModel::NSS), NumericError);
}

TEST_CASE("four-factor fit with a vanishing second curvature matches the three-factor fit") {
    const TenorGrid grid = grid_1_to(14);
    Eigen::VectorXd ns_l(1);
    ns_l << 0.0609;
    Eigen::VectorXd nss_l(2);
    nss_l << 0.0609, 0.25;
    const Eigen::Vector3d beta(0.025, -0.012, 0.004);
    const Eigen::VectorXd curve = loading_matrix(grid, ns_l, CurveModel::NS) * beta;

    const CurveFit ns_fit = fit_curve_ols(curve, grid, ns_l, CurveModel::NS);
    const CurveFit nss_fit = fit_curve_ols(curve, grid, nss_l, CurveModel::NSS);
    CHECK((nss_fit.beta.head(3) - ns_fit.beta).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(std::abs(nss_fit.beta(3)) < 1e-8);
}

namespace {

GeneratorSpec constant_ns_spec() {
    GeneratorSpec spec;
    spec.model = CurveModel::NS;
    spec.lambdas = default_lambdas(CurveModel::NS);
    spec.families = {"Euro", "UK"};
    for (int i = 1; i <= 12; ++i) spec.tenors.push_back(i);
    spec.n_dates = 10;
    spec.beta_start = Eigen::Vector3d(0.03, -0.01, 0.005);
    ArPathSpec ar;
    ar.psi0 = spec.beta_start;
    ar.psi1 = Eigen::Vector3d::Zero();
    ar.sigma = Eigen::Vector3d::Zero();
    spec.dynamics = ar;
    return spec;
}

}  // namespace

TEST_CASE("panel fit recovers the generator's factor paths") {
    GeneratorSpec spec = constant_ns_spec();
    ArPathSpec ar;
    ar.psi0 = Eigen::Vector3d(0.002, -0.001, 0.0005);
    ar.psi1 = Eigen::Vector3d(0.9, 0.8, 0.7);
    ar.sigma = Eigen::Vector3d(0.002, 0.002, 0.001);
    spec.dynamics = ar;
    spec.n_dates = 30;
    const YieldPanel panel = synth_panel(spec, 7);

    const auto series = fit_panel(panel, spec.lambdas, CurveModel::NS);
    REQUIRE(series.size() == 2);
    for (const auto& fs : series) {
        CHECK(fs.values.rows() == 30);
        CHECK(fs.residual_sd < 1e-10);
    }
    // paths reproduce the injected dynamics exactly at zero noise: refit from
    // curves equals the recursion that generated them
    GeneratorSpec zero = spec;
    std::get<ArPathSpec>(zero.dynamics).sigma = Eigen::Vector3d::Zero();
    const YieldPanel clean = synth_panel(zero, 7);
    const auto clean_series = fit_panel(clean, spec.lambdas, CurveModel::NS);
    Eigen::Vector3d beta = spec.beta_start;
    for (int t = 0; t < clean.n_dates(); ++t) {
        if (t > 0) beta = ar.psi0 + ar.psi1.cwiseProduct(beta);
        CHECK((clean_series[0].values.row(t).transpose() - beta).cwiseAbs().maxCoeff() <
              1e-8);
    }
}

TEST_CASE("single-date panel pools M residuals") {
    GeneratorSpec spec = constant_ns_spec();
    spec.n_dates = 1;
    spec.sigma_eps = 0.0;
    const YieldPanel panel = synth_panel(spec, 3);
    const auto series = fit_panel(panel, spec.lambdas, CurveModel::NS);
    CHECK(series[0].values.rows() == 1);
    CHECK(series[0].residual_sd == doctest::Approx(0.0));
}

TEST_CASE("pooled residual sd estimates the injected noise level") {
    GeneratorSpec spec = constant_ns_spec();
    spec.n_dates = 100;  // 12 tenors x 100 dates = 1200 points per family
    spec.sigma_eps = 1e-4;
    const YieldPanel panel = synth_panel(spec, 11);
    const auto series = fit_panel(panel, spec.lambdas, CurveModel::NS);
    for (const auto& fs : series) {
        CHECK(fs.residual_sd > 0.8e-4);
        CHECK(fs.residual_sd < 1.2e-4);
    }
}

TEST_CASE("decay grid search lands on the generating decay") {
    GeneratorSpec spec = constant_ns_spec();
    spec.n_dates = 12;
    YieldPanel panel = synth_panel(spec, 2);
    std::vector<Eigen::VectorXd> candidates;
    for (double l : {0.01, 0.0609, 0.3}) {
        Eigen::VectorXd c(1);
        c << l;
        candidates.push_back(c);
    }
    const Eigen::VectorXd best = search_lambdas(panel, CurveModel::NS, candidates);
    CHECK(best(0) == doctest::Approx(0.0609));
}
