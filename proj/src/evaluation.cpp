#include "deepyc/evaluation.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "deepyc/errors.hpp"

namespace deepyc {

std::pair<double, double> point_metrics(const Eigen::VectorXd& actual,
                                        const Eigen::VectorXd& central) {
    if (actual.size() != central.size() || actual.size() == 0)
        throw DataError("point_metrics: misaligned instance sets");
    const Eigen::ArrayXd err = (actual - central).array();
    return {err.square().mean(), err.abs().mean()};
}

std::pair<double, double> interval_metrics(const Eigen::VectorXd& actual,
                                           const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper) {
    if (actual.size() != lower.size() || actual.size() != upper.size() || actual.size() == 0)
        throw DataError("interval_metrics: misaligned instance sets");
    if ((lower.array() > upper.array()).any())
        throw DataError("interval_metrics: crossed bounds");
    const auto covered =
        (actual.array() >= lower.array() && actual.array() <= upper.array());
    const double picp = covered.cast<double>().mean();
    const double mpiw = (upper - lower).mean();
    return {picp, mpiw};
}

namespace {

struct Accumulator {
    long n = 0;
    double se = 0.0, ae = 0.0, width = 0.0;
    long covered = 0;

    void add(double actual, double lower, double central, double upper) {
        if (lower > upper) throw DataError("crossed forecast bounds");
        const double e = actual - central;
        ++n;
        se += e * e;
        ae += std::abs(e);
        width += upper - lower;
        if (actual >= lower && actual <= upper) ++covered;
    }

    MetricSlice slice() const {
        if (n == 0) throw DataError("metric slice over an empty instance set");
        MetricSlice s;
        s.n = n;
        s.mse = se / static_cast<double>(n);
        s.mae = ae / static_cast<double>(n);
        s.picp = static_cast<double>(covered) / static_cast<double>(n);
        s.mpiw = width / static_cast<double>(n);
        return s;
    }
};

}  // namespace

MetricReport compute_report(const YieldPanel& actual,
                            const std::vector<ForecastTriple>& forecasts,
                            const std::string& model_name) {
    actual.validate();
    if (forecasts.empty()) throw DataError("compute_report: no forecasts");

    Accumulator global;
    std::map<std::string, Accumulator> by_family;
    std::map<double, Accumulator> by_tenor;

    for (const auto& f : forecasts) {
        f.validate();
        const int fam = actual.family_index(f.family);
        if (fam < 0)
            throw DataError("compute_report: family '" + f.family +
                            "' is not in the realized panel");
        const int t = actual.date_index(f.as_of);
        if (t < 0)
            throw DataError("compute_report: as_of '" + f.as_of +
                            "' is not a realized panel date");
        if (t + 1 >= actual.n_dates())
            throw DataError("compute_report: no realized curve after as_of '" + f.as_of +
                            "'");
        if (f.central.size() != actual.n_tenors())
            throw DataError("compute_report: forecast for '" + f.family +
                            "' does not match the panel tenor grid");
        const Eigen::VectorXd realized =
            actual.rates[static_cast<std::size_t>(fam)].row(t + 1).transpose();
        for (Eigen::Index j = 0; j < realized.size(); ++j) {
            const double tenor = actual.grid.tenors(j);
            global.add(realized(j), f.lower(j), f.central(j), f.upper(j));
            by_family[f.family].add(realized(j), f.lower(j), f.central(j), f.upper(j));
            by_tenor[tenor].add(realized(j), f.lower(j), f.central(j), f.upper(j));
        }
    }

    MetricReport report;
    report.model = model_name;
    report.global = global.slice();
    for (const auto& [k, acc] : by_family) report.by_family[k] = acc.slice();
    for (const auto& [k, acc] : by_tenor) report.by_tenor[k] = acc.slice();
    return report;
}

MpiwIdentityReport check_mpiw_identity(
    const std::vector<std::vector<ForecastTriple>>& members,
    const std::vector<ForecastTriple>& ensemble) {
    if (members.empty()) throw DataError("check_mpiw_identity: no members");

    auto mpiw_of = [](const std::vector<ForecastTriple>& fs) {
        if (fs.empty()) throw DataError("check_mpiw_identity: empty forecast set");
        double width = 0.0;
        long n = 0;
        for (const auto& f : fs) {
            width += (f.upper - f.lower).sum();
            n += f.upper.size();
        }
        return width / static_cast<double>(n);
    };

    for (const auto& m : members) {
        if (m.size() != ensemble.size())
            throw DataError("check_mpiw_identity: member/ensemble instance sets differ");
        for (std::size_t i = 0; i < m.size(); ++i)
            if (m[i].family != ensemble[i].family || m[i].as_of != ensemble[i].as_of)
                throw DataError("check_mpiw_identity: misaligned instance (" +
                                m[i].family + ", " + m[i].as_of + ")");
    }

    MpiwIdentityReport rep;
    double sum = 0.0;
    for (const auto& m : members) sum += mpiw_of(m);
    rep.member_average = sum / static_cast<double>(members.size());
    rep.ensemble = mpiw_of(ensemble);
    rep.difference = rep.member_average - rep.ensemble;
    rep.pass = std::abs(rep.difference) <= 1e-12;
    return rep;
}

namespace {

nlohmann::json slice_to_json(const MetricSlice& s) {
    return {{"n", s.n}, {"mse", s.mse}, {"mae", s.mae}, {"picp", s.picp}, {"mpiw", s.mpiw}};
}

}  // namespace

nlohmann::json report_to_json(const MetricReport& report) {
    nlohmann::json j;
    j["model"] = report.model;
    j["n"] = report.global.n;
    j["mse"] = report.global.mse;
    j["mae"] = report.global.mae;
    j["picp"] = report.global.picp;
    j["mpiw"] = report.global.mpiw;
    nlohmann::json fam = nlohmann::json::object();
    for (const auto& [k, s] : report.by_family) fam[k] = slice_to_json(s);
    j["by_family"] = std::move(fam);
    nlohmann::json ten = nlohmann::json::object();
    for (const auto& [k, s] : report.by_tenor) {
        char key[64];
        std::snprintf(key, sizeof(key), "%g", k);
        ten[key] = slice_to_json(s);
    }
    j["by_tenor"] = std::move(ten);
    return j;
}

std::string format_scaled(double value, double scale) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", value * scale);
    return buf;
}

std::string render_report(const MetricReport& report) {
    std::ostringstream os;
    os << "model=" << (report.model.empty() ? "-" : report.model)
       << " n=" << report.global.n
       << " MSE(x1e5)=" << format_scaled(report.global.mse, kMseDisplayScale)
       << " MAE(x1e2)=" << format_scaled(report.global.mae, kMaeDisplayScale)
       << " PICP=" << format_scaled(report.global.picp, 1.0)
       << " MPIW=" << format_scaled(report.global.mpiw, 1.0);
    return os.str();
}

void write_report_csv(const MetricReport& report, const std::string& path,
                      const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const auto& c : header_comments) out << "# " << c << "\n";
    out << "scope,key,n,mse,mae,picp,mpiw\n";
    auto row = [&](const std::string& scope, const std::string& key, const MetricSlice& s) {
        out << scope << ',' << key << ',' << s.n << ',' << s.mse << ',' << s.mae << ','
            << s.picp << ',' << s.mpiw << '\n';
    };
    row("global", report.model.empty() ? "-" : report.model, report.global);
    for (const auto& [k, s] : report.by_family) row("family", k, s);
    for (const auto& [k, s] : report.by_tenor) {
        char key[64];
        std::snprintf(key, sizeof(key), "%g", k);
        row("tenor", key, s);
    }
}

}  // namespace deepyc
