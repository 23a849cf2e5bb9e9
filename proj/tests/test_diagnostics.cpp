#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "deepyc/curve_data.hpp"
#include "deepyc/diagnostics.hpp"
#include "deepyc/errors.hpp"
#include "deepyc/random.hpp"
#include "deepyc/stats.hpp"

using namespace deepyc;

namespace {

YieldPanel feature_panel(int n_dates = 16) {
    GeneratorSpec spec;
    spec.model = CurveModel::NSS;
    spec.lambdas = default_lambdas(CurveModel::NSS);
    spec.families = {"Euro", "UK"};
    spec.tenors = {1, 3, 6, 12, 24, 48, 84, 120};
    spec.n_dates = n_dates;
    spec.beta_start = Eigen::Vector4d(0.03, -0.01, 0.005, 0.002);
    ArPathSpec ar;
    ar.psi0 = Eigen::Vector4d(0.003, -0.002, 0.001, 0.0);
    ar.psi1 = Eigen::Vector4d(0.9, 0.8, 0.7, 0.6);
    ar.sigma = Eigen::Vector4d(0.002, 0.0015, 0.001, 0.0008);
    spec.dynamics = ar;
    spec.sigma_eps = 1e-4;
    return synth_panel(spec, 77);
}

DeepYCModel feature_model(const YieldPanel& panel) {
    DeepYCConfig c;
    c.lookback = 9;
    c.tenors.assign(panel.grid.tenors.data(),
                    panel.grid.tenors.data() + panel.grid.tenors.size());
    for (const auto& f : panel.families) c.family_ids.push_back(f.id);
    c.q_attn = 8;
    c.q_embed = 2;
    c.trunk_in = c.n_tenors();
    RngStream rng(55, "init");
    return init_model(c, rng);
}

}  // namespace

TEST_CASE("feature extraction") {
    const YieldPanel panel = feature_panel();
    const DeepYCModel model = feature_model(panel);
    const auto windows = make_windows(panel, 9);
    const FeatureMatrix features = extract_features(model, windows);

    SUBCASE("width is embedding size plus flattened feature block") {
        CHECK(features.values.cols() == 2 + 10 * 8);  // 82
        CHECK(features.values.rows() == static_cast<Eigen::Index>(windows.size()));
    }
    SUBCASE("identical inputs give identical rows") {
        const FeatureMatrix again = extract_features(model, windows);
        CHECK((features.values.array() == again.values.array()).all());
    }
    SUBCASE("same history, different family differs only in embedding columns") {
        WindowSample a = windows.front();
        WindowSample b = a;
        b.family = panel.families[1];
        const FeatureMatrix pair = extract_features(model, {a, b});
        const Eigen::VectorXd diff =
            (pair.values.row(0) - pair.values.row(1)).cwiseAbs().transpose();
        CHECK(diff.head(2).maxCoeff() > 0.0);
        CHECK(diff.tail(80).maxCoeff() == 0.0);
    }
}

TEST_CASE("principal component analysis") {
    SUBCASE("rank-one data concentrates in the first component") {
        RngStream rng(1, "line");
        Eigen::MatrixXd X(200, 2);
        for (int i = 0; i < 200; ++i) {
            const double t = rng.normal();
            X(i, 0) = 2.0 * t;
            X(i, 1) = -t;
        }
        const PCAResult r = pca(X, 2);
        CHECK(r.explained_ratio(0) == doctest::Approx(1.0).epsilon(1e-10));
        CHECK(r.eigenvalues(1) <= 1e-12);
    }
    SUBCASE("isotropic data splits variance evenly") {
        RngStream rng(2, "iso");
        const Eigen::MatrixXd X = rng.normal_matrix(10000, 2);
        const PCAResult r = pca(X, 2);
        CHECK(r.eigenvalues(0) / r.eigenvalues(1) == doctest::Approx(1.0).epsilon(0.05));
    }
    SUBCASE("ratios sum to one, scores are centered, components orthonormal") {
        RngStream rng(3, "ratios");
        const Eigen::MatrixXd X = rng.normal_matrix(300, 6);
        const PCAResult r = pca(X, 6);
        CHECK(r.explained_ratio.sum() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(r.scores.colwise().mean().cwiseAbs().maxCoeff() < 1e-10);
        const Eigen::MatrixXd gram = r.components.transpose() * r.components;
        CHECK((gram - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() < 1e-8);
        for (Eigen::Index i = 1; i < r.eigenvalues.size(); ++i)
            CHECK(r.eigenvalues(i - 1) >= r.eigenvalues(i));
    }
    SUBCASE("column permutation permutes loadings and keeps eigenvalues") {
        RngStream rng(4, "perm");
        Eigen::MatrixXd X = rng.normal_matrix(300, 3);
        X.col(0) *= 3.0;  // give the spectrum a clear order
        X.col(2) *= 0.25;
        const PCAResult base = pca(X, 3);
        Eigen::MatrixXd Xp(300, 3);
        Xp.col(0) = X.col(2);
        Xp.col(1) = X.col(0);
        Xp.col(2) = X.col(1);
        const PCAResult perm = pca(Xp, 3);
        CHECK((base.eigenvalues - perm.eigenvalues).cwiseAbs().maxCoeff() < 1e-10);
        // loading of original column 0 appears at permuted position 1
        CHECK(std::abs(base.components(0, 0)) ==
              doctest::Approx(std::abs(perm.components(1, 0))).epsilon(1e-8));
    }
    SUBCASE("zero-variance input is allowed") {
        const Eigen::MatrixXd X = Eigen::MatrixXd::Constant(10, 3, 1.5);
        const PCAResult r = pca(X, 2);
        CHECK(r.eigenvalues.cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("sign is deterministic") {
        RngStream rng(5, "sign");
        const Eigen::MatrixXd X = rng.normal_matrix(100, 4);
        const PCAResult a = pca(X, 4);
        const PCAResult b = pca(X, 4);
        CHECK((a.components.array() == b.components.array()).all());
        for (int j = 0; j < 4; ++j) {
            Eigen::Index imax;
            a.components.col(j).cwiseAbs().maxCoeff(&imax);
            CHECK(a.components(imax, j) > 0.0);
        }
    }
    SUBCASE("degenerate requests are rejected") {
        CHECK_THROWS_AS(pca(Eigen::MatrixXd::Zero(1, 3), 1), DataError);
        CHECK_THROWS_AS(pca(Eigen::MatrixXd::Zero(5, 3), 4), ConfigError);
    }
}

TEST_CASE("pearson correlation behavior") {
    RngStream rng(6, "pearson");
    const Eigen::VectorXd x = rng.normal_vector(500);

    SUBCASE("affine invariance and sign flip") {
        const Eigen::VectorXd y = 2.0 * x.array() + 1.0;
        CHECK(*pearson(x, y) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(*pearson(x, Eigen::VectorXd(-x)) == doctest::Approx(-1.0).epsilon(1e-12));
        const Eigen::VectorXd z = rng.normal_vector(500);
        const double r = *pearson(x, z);
        CHECK(*pearson(x, Eigen::VectorXd(3.0 * z.array() - 2.0)) ==
              doctest::Approx(r).epsilon(1e-10));
    }
    SUBCASE("independent draws have small correlation") {
        for (std::uint64_t seed = 10; seed < 15; ++seed) {
            RngStream r2(seed, "noise");
            const Eigen::VectorXd a = r2.normal_vector(1000);
            const Eigen::VectorXd b = r2.normal_vector(1000);
            CHECK(std::abs(*pearson(a, b)) <= 0.1);
        }
    }
    SUBCASE("constant series yield no correlation") {
        CHECK_FALSE(pearson(x, Eigen::VectorXd::Constant(500, 2.0)).has_value());
    }
    SUBCASE("range stays in [-1, 1]") {
        for (int rep = 0; rep < 20; ++rep) {
            const Eigen::VectorXd a = rng.normal_vector(50);
            const Eigen::VectorXd b = rng.normal_vector(50);
            const double r = *pearson(a, b);
            CHECK(r <= 1.0);
            CHECK(r >= -1.0);
        }
    }
}

TEST_CASE("score-factor correlation table") {
    const YieldPanel panel = feature_panel(20);
    const auto factors = fit_panel(panel, default_lambdas(CurveModel::NSS), CurveModel::NSS);

    // synthesize scores tied affinely to the latent factors
    FeatureMatrix features;
    const auto& fs = factors[0];
    const int T = static_cast<int>(fs.dates.size());
    features.values = Eigen::MatrixXd::Zero(T, 4);
    for (int t = 0; t < T; ++t) {
        features.family.push_back("Euro");
        features.as_of.push_back(fs.dates[static_cast<std::size_t>(t)]);
    }

    PCAResult fake;
    fake.n_components = 2;
    fake.scores.resize(T, 2);
    for (int t = 0; t < T; ++t) {
        fake.scores(t, 0) = 2.0 * fs.values(t, 0) + 1.0;  // affine in the level factor
        fake.scores(t, 1) = -fs.values(t, 1);             // negated slope factor
    }

    const CorrelationTable table = factor_correlation(fake, features, factors);
    REQUIRE(table.mean_abs_pearson.count("Euro") == 1);
    // each score correlates perfectly with one factor; the mean over all
    // (component, factor) pairs is the average of |r| over 8 pairs
    CHECK(table.mean_abs_pearson.at("Euro") ==
          doctest::Approx([&] {
              double total = 0.0;
              int used = 0;
              for (int pc = 0; pc < 2; ++pc)
                  for (int b = 0; b < 4; ++b) {
                      Eigen::VectorXd s = fake.scores.col(pc);
                      Eigen::VectorXd f = fs.values.col(b);
                      total += std::abs(*pearson(s, f));
                      ++used;
                  }
              return total / used;
          }()).epsilon(1e-12));
    CHECK(table.mean_abs_pearson.at("Euro") > 0.25);  // two perfect pairs out of eight
}

TEST_CASE("constant factor columns are excluded rather than poisoning the mean") {
    FeatureMatrix features;
    features.values = Eigen::MatrixXd::Zero(10, 1);
    FactorSeries fs;
    fs.family = {"Euro", 0};
    fs.values = Eigen::MatrixXd::Zero(10, 2);
    PCAResult fake;
    fake.n_components = 1;
    fake.scores.resize(10, 1);
    RngStream rng(8, "const");
    for (int t = 0; t < 10; ++t) {
        features.family.push_back("Euro");
        features.as_of.push_back("d" + std::to_string(t));
        fs.dates.push_back("d" + std::to_string(t));
        fake.scores(t, 0) = rng.normal();
        fs.values(t, 0) = 3.0;                  // constant: excluded
        fs.values(t, 1) = fake.scores(t, 0);    // perfect: |r| = 1
    }
    const CorrelationTable table = factor_correlation(fake, features, {fs});
    CHECK(table.skipped_pairs == 1);
    CHECK(table.mean_abs_pearson.at("Euro") == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spearman rank correlation tracks monotone association") {
    Eigen::VectorXd x(20), y(20);
    for (int i = 0; i < 20; ++i) {
        x(i) = i;
        y(i) = std::exp(0.3 * i);  // monotone, nonlinear
    }
    CHECK(*spearman(x, y) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(*spearman(x, Eigen::VectorXd(-y)) == doctest::Approx(-1.0).epsilon(1e-12));
}
