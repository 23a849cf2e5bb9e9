#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "deepyc/curve_data.hpp"
#include "deepyc/errors.hpp"
#include "deepyc/random.hpp"

using namespace deepyc;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("deepyc_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

YieldPanel small_panel() {
    GeneratorSpec spec;
    spec.model = CurveModel::NS;
    spec.lambdas = default_lambdas(CurveModel::NS);
    spec.families = {"Euro", "UK", "US"};
    spec.tenors = {1, 3, 6, 12, 24};
    spec.n_dates = 12;
    spec.beta_start = Eigen::Vector3d(0.03, -0.01, 0.005);
    ArPathSpec ar;
    ar.psi0 = Eigen::Vector3d(0.003, -0.002, 0.001);
    ar.psi1 = Eigen::Vector3d(0.9, 0.8, 0.7);
    ar.sigma = Eigen::Vector3d(0.002, 0.001, 0.001);
    spec.dynamics = ar;
    spec.sigma_eps = 1e-4;
    return synth_panel(spec, 42);
}

bool panels_equal(const YieldPanel& a, const YieldPanel& b, double tol = 1e-12) {
    if (a.n_families() != b.n_families() || a.n_dates() != b.n_dates() ||
        a.n_tenors() != b.n_tenors())
        return false;
    if (a.dates != b.dates) return false;
    for (int f = 0; f < a.n_families(); ++f) {
        if (a.families[static_cast<std::size_t>(f)].id !=
            b.families[static_cast<std::size_t>(f)].id)
            return false;
        if ((a.rates[static_cast<std::size_t>(f)] - b.rates[static_cast<std::size_t>(f)])
                .cwiseAbs()
                .maxCoeff() > tol)
            return false;
    }
    return true;
}

}  // namespace

TEST_CASE("long-format load keeps shape bookkeeping") {
    TempDir dir;
    std::string csv = "family,date,tenor,rate\n";
    for (const char* fam : {"Euro", "UK"})
        for (const char* date : {"2021-01", "2021-02", "2021-03"})
            for (int tenor : {1, 2, 3, 4})
                csv += std::string(fam) + "," + date + "," + std::to_string(tenor) + ",0.01\n";
    const std::string path = dir.file("panel.csv");
    write_file(path, csv);

    const YieldPanel panel = load_panel(path);
    CHECK(panel.n_families() == 2);
    CHECK(panel.n_dates() == 3);
    CHECK(panel.n_tenors() == 4);
    CHECK(panel.rates[0].rows() == 3);
    CHECK(panel.rates[0].cols() == 4);
}

TEST_CASE("a missing tenor names family, date and tenor") {
    TempDir dir;
    std::string csv = "family,date,tenor,rate\n";
    for (const char* date : {"2021-05", "2021-06"})
        for (int tenor : {1, 12, 24})
            if (!(std::string(date) == "2021-06" && tenor == 24))
                csv += std::string("Euro,") + date + "," + std::to_string(tenor) + ",0.02\n";
    const std::string path = dir.file("panel.csv");
    write_file(path, csv);

    try {
        load_panel(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("Euro") != std::string::npos);
        CHECK(msg.find("2021-06") != std::string::npos);
        CHECK(msg.find("24") != std::string::npos);
    }
}

TEST_CASE("wide and long layouts load to the same panel") {
    TempDir dir;
    const YieldPanel oracle = small_panel();
    const std::string long_path = dir.file("long.csv");
    const std::string wide_path = dir.file("wide.csv");
    save_panel(oracle, long_path, PanelLayout::Long);
    save_panel(oracle, wide_path, PanelLayout::Wide);

    const YieldPanel from_long = load_panel(long_path);
    const YieldPanel from_wide = load_panel(wide_path);
    CHECK(panels_equal(from_long, oracle));
    CHECK(panels_equal(from_wide, oracle));
    CHECK(panels_equal(from_long, from_wide));
}

TEST_CASE("wide layout with m-prefixed headers") {
    TempDir dir;
    const std::string path = dir.file("panel.csv");
    write_file(path,
               "family,date,m1,m2,m6\n"
               "Euro,2021-01,0.01,0.011,0.012\n"
               "Euro,2021-02,0.01,0.012,0.013\n");
    const YieldPanel panel = load_panel(path);
    CHECK(panel.n_tenors() == 3);
    CHECK(panel.grid.tenors(2) == 6.0);
}

TEST_CASE("malformed rows carry the line number") {
    TempDir dir;
    const std::string path = dir.file("panel.csv");
    write_file(path,
               "family,date,tenor,rate\n"
               "Euro,2021-01,1,0.01\n"
               "Euro,2021-01,2,banana\n");
    try {
        load_panel(path);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("duplicate observations are rejected") {
    TempDir dir;
    const std::string path = dir.file("panel.csv");
    write_file(path,
               "family,date,tenor,rate\n"
               "Euro,2021-01,1,0.01\n"
               "Euro,2021-01,1,0.02\n");
    CHECK_THROWS_AS(load_panel(path), DataError);
}

TEST_CASE("rate scale converts percent input") {
    TempDir dir;
    const std::string path = dir.file("panel.csv");
    write_file(path,
               "family,date,tenor,rate\n"
               "Euro,2021-01,1,1.23\n"
               "Euro,2021-02,1,1.5\n");
    const YieldPanel panel = load_panel(path, {0.01, std::nullopt});
    CHECK(panel.rates[0](0, 0) == doctest::Approx(0.0123).epsilon(1e-15));
}

TEST_CASE("comment lines are skipped") {
    TempDir dir;
    const std::string path = dir.file("panel.csv");
    write_file(path,
               "# config_hash=abc\n"
               "family,date,tenor,rate\n"
               "Euro,2021-01,1,0.01\n"
               "Euro,2021-02,1,0.011\n");
    CHECK(load_panel(path).n_dates() == 2);
}

TEST_CASE("split partitions dates around the cutoff") {
    const YieldPanel panel = small_panel();
    REQUIRE(panel.n_dates() == 12);

    SUBCASE("cut at the tenth date") {
        auto [learn, test] = split(panel, {panel.dates[9]});
        CHECK(learn.n_dates() == 10);
        CHECK(test.n_dates() == 2);
        CHECK(learn.dates.back() == panel.dates[9]);
        CHECK(test.dates.front() == panel.dates[10]);
    }
    SUBCASE("cut at the final date fails") {
        CHECK_THROWS_AS(split(panel, {panel.dates.back()}), DataError);
    }
    SUBCASE("cut before the first date fails") {
        CHECK_THROWS_AS(split(panel, {"1900-01"}), DataError);
    }
    SUBCASE("a cutoff between two dates sends the boundary to the learning side") {
        // synthetic labels are YYYY-MM; append a day to land between months
        const std::string between = panel.dates[5] + "-15";
        auto [learn, test] = split(panel, {between});
        CHECK(learn.n_dates() == 6);
        CHECK(learn.dates.back() == panel.dates[5]);
        // exhaustive partition oracle
        for (const auto& d : panel.dates) {
            const bool in_learn =
                std::find(learn.dates.begin(), learn.dates.end(), d) != learn.dates.end();
            CHECK(in_learn == !(between < d));
        }
    }
}

TEST_CASE("split reconstructs the original date set") {
    const YieldPanel panel = small_panel();
    for (int cut = 0; cut + 1 < panel.n_dates(); ++cut) {
        auto [learn, test] = split(panel, {panel.dates[static_cast<std::size_t>(cut)]});
        std::vector<std::string> merged = learn.dates;
        merged.insert(merged.end(), test.dates.begin(), test.dates.end());
        CHECK(merged == panel.dates);
        CHECK(panels_equal(learn, split(panel, {learn.dates.back()}).first));
    }
}

TEST_CASE("window construction") {
    const YieldPanel panel = small_panel();

    SUBCASE("count and as_of labels for L=9") {
        YieldPanel one_family = panel;
        one_family.families = {panel.families[0]};
        one_family.rates = {panel.rates[0]};
        const auto windows = make_windows(one_family, 9);
        REQUIRE(windows.size() == 2);  // 12 dates: as_of at the 10th and 11th
        CHECK(windows[0].as_of == panel.dates[9]);
        CHECK(windows[1].as_of == panel.dates[10]);
        CHECK(windows[0].history.rows() == 10);
        CHECK((windows[0].target - panel.rates[0].row(10).transpose()).norm() == 0.0);
    }
    SUBCASE("count matches enumeration for all L and families") {
        for (int L : {0, 1, 5, 9}) {
            const auto windows = make_windows(panel, L);
            std::size_t expected = 0;
            for (int f = 0; f < panel.n_families(); ++f)
                for (int t = 0; t + 1 < panel.n_dates(); ++t)
                    if (t - L >= 0) ++expected;
            CHECK(windows.size() == expected);
        }
    }
    SUBCASE("degenerate window L=0") {
        const auto windows = make_windows(panel, 0);
        CHECK(windows.front().history.rows() == 1);
        CHECK((windows.front().history.row(0).transpose() -
               panel.rates[0].row(0).transpose())
                  .norm() == 0.0);
    }
    SUBCASE("three families triple the single-family count") {
        const auto windows = make_windows(panel, 4);
        CHECK(windows.size() % 3 == 0);
    }
    SUBCASE("too few dates") { CHECK_THROWS_AS(make_windows(panel, 11), DataError); }
}

TEST_CASE("constant-factor generation is exactly curve-shaped") {
    GeneratorSpec spec;
    spec.model = CurveModel::NS;
    spec.lambdas = default_lambdas(CurveModel::NS);
    spec.families = {"Euro"};
    spec.tenors = {1, 6, 12, 60, 120};
    spec.n_dates = 5;
    spec.beta_start = Eigen::Vector3d(0.03, -0.01, 0.005);
    ArPathSpec ar;
    ar.psi0 = spec.beta_start;
    ar.psi1 = Eigen::Vector3d::Zero();
    ar.sigma = Eigen::Vector3d::Zero();
    spec.dynamics = ar;

    const YieldPanel panel = synth_panel(spec, 9);
    const Eigen::MatrixXd loadings =
        loading_matrix(panel.grid, spec.lambdas, CurveModel::NS);
    const Eigen::VectorXd expected = loadings * spec.beta_start;
    for (int t = 0; t < panel.n_dates(); ++t)
        CHECK((panel.rates[0].row(t).transpose() - expected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("deterministic decay path under a halving recursion") {
    GeneratorSpec spec;
    spec.model = CurveModel::NS;
    spec.lambdas = default_lambdas(CurveModel::NS);
    spec.families = {"Euro"};
    spec.tenors = {1, 3, 6, 12, 24, 48};
    spec.n_dates = 6;
    spec.beta_start = Eigen::Vector3d(1.0, 0.2, 0.1);
    ArPathSpec ar;
    ar.psi0 = Eigen::Vector3d::Zero();
    ar.psi1 = Eigen::Vector3d(0.5, 0.5, 0.5);
    ar.sigma = Eigen::Vector3d::Zero();
    spec.dynamics = ar;

    const YieldPanel panel = synth_panel(spec, 1);
    const auto series = fit_panel(panel, spec.lambdas, CurveModel::NS);
    double expected = 1.0;
    for (int t = 0; t < 6; ++t) {
        CHECK(series[0].values(t, 0) == doctest::Approx(expected).epsilon(1e-10));
        expected *= 0.5;
    }
}

TEST_CASE("same seed gives bit-identical panels") {
    const YieldPanel a = small_panel();
    const YieldPanel b = small_panel();
    for (int f = 0; f < a.n_families(); ++f)
        CHECK((a.rates[static_cast<std::size_t>(f)].array() ==
               b.rates[static_cast<std::size_t>(f)].array())
                  .all());

    GeneratorSpec spec;
    spec.model = CurveModel::NS;
    spec.lambdas = default_lambdas(CurveModel::NS);
    spec.families = {"Euro"};
    spec.tenors = {1, 2, 3};
    spec.n_dates = 4;
    spec.beta_start = Eigen::Vector3d(0.02, 0.0, 0.0);
    ArPathSpec ar;
    ar.psi0 = Eigen::Vector3d::Zero();
    ar.psi1 = Eigen::Vector3d(0.5, 0.5, 0.5);
    ar.sigma = Eigen::Vector3d(0.01, 0.01, 0.01);
    spec.dynamics = ar;
    const YieldPanel s1 = synth_panel(spec, 1);
    const YieldPanel s2 = synth_panel(spec, 2);
    CHECK_FALSE((s1.rates[0].array() == s2.rates[0].array()).all());
}

TEST_CASE("non-stationary generator specs are rejected") {
    GeneratorSpec spec;
    spec.model = CurveModel::NS;
    spec.lambdas = default_lambdas(CurveModel::NS);
    spec.families = {"Euro"};
    spec.tenors = {1, 2, 3};
    spec.n_dates = 4;
    spec.beta_start = Eigen::Vector3d(0.02, 0.0, 0.0);

    ArPathSpec ar;
    ar.psi0 = Eigen::Vector3d::Zero();
    ar.psi1 = Eigen::Vector3d(1.0, 0.5, 0.5);
    ar.sigma = Eigen::Vector3d::Zero();
    spec.dynamics = ar;
    CHECK_THROWS_AS(synth_panel(spec, 1), DataError);

    VarPathSpec var;
    var.a0 = Eigen::Vector3d::Zero();
    var.A = Eigen::Matrix3d::Identity();  // spectral radius 1
    var.E = Eigen::Matrix3d::Zero();
    spec.dynamics = var;
    CHECK_THROWS_AS(synth_panel(spec, 1), DataError);
}

TEST_CASE("generator spec file round trip") {
    TempDir dir;
    const std::string path = dir.file("gen.json");
    write_file(path, R"({
      "model": "ns",
      "lambdas": [0.0609],
      "families": ["Euro", "UK"],
      "tenors": [1, 3, 6, 12],
      "n_dates": 8,
      "beta_start": [0.03, -0.01, 0.005],
      "dynamics": {"type": "ar", "psi0": [0, 0, 0], "psi1": [0.5, 0.5, 0.5],
                   "sigma": [0.001, 0.001, 0.001]},
      "sigma_eps": 0.0001
    })");
    const GeneratorSpec spec = load_generator_spec(path);
    CHECK(spec.families.size() == 2);
    CHECK(spec.n_dates == 8);
    const YieldPanel panel = synth_panel(spec, 5);
    CHECK(panel.n_dates() == 8);

    const std::string bad = dir.file("bad.json");
    write_file(bad, R"({"model": "ns", "lambda": [0.0609]})");
    CHECK_THROWS_AS(load_generator_spec(bad), ConfigError);
}

TEST_CASE("panel validation catches inconsistencies") {
    YieldPanel panel = small_panel();
    SUBCASE("duplicate family ids") {
        panel.families[1].id = panel.families[0].id;
        CHECK_THROWS_AS(panel.validate(), DataError);
    }
    SUBCASE("non-finite rates") {
        panel.rates[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
        CHECK_THROWS_AS(panel.validate(), DataError);
    }
    SUBCASE("dimension mismatch") {
        panel.rates[0] = Eigen::MatrixXd::Zero(3, 3);
        CHECK_THROWS_AS(panel.validate(), DataError);
    }
}
