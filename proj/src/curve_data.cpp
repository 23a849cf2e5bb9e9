#include "deepyc/curve_data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "deepyc/errors.hpp"
#include "deepyc/random.hpp"
#include "text_util.hpp"

namespace deepyc {

namespace detail {

bool parse_double(const std::string& field, double& value) {
    if (field.empty()) return false;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto res = std::from_chars(begin, end, value);
    return res.ec == std::errc{} && res.ptr == end && std::isfinite(value);
}

std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

using detail::parse_double;
using detail::split_csv;

TenorGrid make_tenor_grid(const std::vector<double>& tenors, std::string unit) {
    if (tenors.empty()) throw DataError("tenor grid must be non-empty");
    TenorGrid g;
    g.unit = std::move(unit);
    g.tenors.resize(static_cast<Eigen::Index>(tenors.size()));
    for (std::size_t i = 0; i < tenors.size(); ++i) {
        if (!(tenors[i] > 0.0)) throw DataError("tenor grid values must be positive");
        if (i > 0 && !(tenors[i] > tenors[i - 1]))
            throw DataError("tenor grid must be strictly increasing");
        g.tenors(static_cast<Eigen::Index>(i)) = tenors[i];
    }
    return g;
}

bool same_grid(const TenorGrid& a, const TenorGrid& b, double tol) {
    if (a.tenors.size() != b.tenors.size()) return false;
    return (a.tenors - b.tenors).cwiseAbs().maxCoeff() <= tol;
}

std::string grid_to_string(const TenorGrid& g) {
    std::ostringstream os;
    os << "[";
    for (Eigen::Index i = 0; i < g.tenors.size(); ++i) {
        if (i) os << ",";
        os << g.tenors(i);
    }
    os << "] " << g.unit;
    return os.str();
}

int YieldPanel::family_index(const std::string& id) const {
    for (std::size_t i = 0; i < families.size(); ++i)
        if (families[i].id == id) return static_cast<int>(i);
    return -1;
}

int YieldPanel::date_index(const std::string& date) const {
    auto it = std::lower_bound(dates.begin(), dates.end(), date);
    if (it == dates.end() || *it != date) return -1;
    return static_cast<int>(it - dates.begin());
}

void YieldPanel::validate() const {
    if (families.empty()) throw DataError("panel has no families");
    if (dates.empty()) throw DataError("panel has no dates");
    if (rates.size() != families.size())
        throw DataError("panel rate blocks do not match family count");
    std::set<std::string> ids;
    for (std::size_t f = 0; f < families.size(); ++f) {
        if (!ids.insert(families[f].id).second)
            throw DataError("duplicate family id '" + families[f].id + "'");
        const auto& m = rates[f];
        if (m.rows() != static_cast<Eigen::Index>(dates.size()) ||
            m.cols() != grid.tenors.size())
            throw DataError("rate block for family '" + families[f].id +
                            "' has inconsistent dimensions");
        if (!m.allFinite())
            throw DataError("non-finite rate in family '" + families[f].id + "'");
    }
    for (std::size_t t = 1; t < dates.size(); ++t)
        if (!(dates[t - 1] < dates[t]))
            throw DataError("panel dates must be strictly increasing (found '" +
                            dates[t - 1] + "' before '" + dates[t] + "')");
}

namespace {

std::string format_tenor(double t) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", t);
    return buf;
}

struct RawLine {
    std::size_t number;
    std::vector<std::string> fields;
};

std::vector<RawLine> read_csv_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::vector<RawLine> lines;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        lines.push_back({n, split_csv(line)});
    }
    if (lines.empty()) throw DataError("'" + path + "' contains no data");
    return lines;
}

YieldPanel assemble_panel(
    const std::vector<std::string>& family_order, const std::vector<double>& tenor_values,
    const std::string& tenor_unit,
    const std::map<std::string, std::map<std::string, std::map<double, double>>>& cells,
    double rate_scale) {
    YieldPanel panel;
    panel.grid = make_tenor_grid(tenor_values, tenor_unit);

    std::set<std::string> date_set;
    for (const auto& [fam, by_date] : cells)
        for (const auto& [date, row] : by_date) date_set.insert(date);
    panel.dates.assign(date_set.begin(), date_set.end());

    for (std::size_t f = 0; f < family_order.size(); ++f)
        panel.families.push_back({family_order[f], static_cast<int>(f)});

    panel.rates.resize(family_order.size());
    for (std::size_t f = 0; f < family_order.size(); ++f) {
        const auto& by_date = cells.at(family_order[f]);
        Eigen::MatrixXd m(panel.dates.size(), tenor_values.size());
        for (std::size_t t = 0; t < panel.dates.size(); ++t) {
            auto it = by_date.find(panel.dates[t]);
            if (it == by_date.end())
                throw DataError("missing observation for family '" + family_order[f] +
                                "' at date '" + panel.dates[t] + "'");
            for (std::size_t j = 0; j < tenor_values.size(); ++j) {
                auto cell = it->second.find(tenor_values[j]);
                if (cell == it->second.end())
                    throw DataError("missing tenor " + format_tenor(tenor_values[j]) +
                                    " for family '" + family_order[f] + "' at date '" +
                                    panel.dates[t] + "'");
                m(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)) =
                    cell->second * rate_scale;
            }
        }
        panel.rates[f] = std::move(m);
    }
    panel.validate();
    return panel;
}

YieldPanel load_long(const std::vector<RawLine>& lines, const LoadOptions& opts) {
    std::map<std::string, std::map<std::string, std::map<double, double>>> cells;
    std::vector<std::string> family_order;
    std::set<double> tenor_set;

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& ln = lines[i];
        if (ln.fields.size() != 4)
            throw DataError("line " + std::to_string(ln.number) +
                            ": expected 4 fields (family,date,tenor,rate), got " +
                            std::to_string(ln.fields.size()));
        const std::string& fam = ln.fields[0];
        const std::string& date = ln.fields[1];
        double tenor, rate;
        if (fam.empty() || date.empty())
            throw DataError("line " + std::to_string(ln.number) + ": empty family or date");
        if (!parse_double(ln.fields[2], tenor))
            throw DataError("line " + std::to_string(ln.number) + ": bad tenor '" +
                            ln.fields[2] + "'");
        if (!parse_double(ln.fields[3], rate))
            throw DataError("line " + std::to_string(ln.number) + ": bad rate '" +
                            ln.fields[3] + "'");
        if (cells.find(fam) == cells.end()) family_order.push_back(fam);
        auto& slot = cells[fam][date];
        if (!slot.emplace(tenor, rate).second)
            throw DataError("line " + std::to_string(ln.number) + ": duplicate observation (" +
                            fam + ", " + date + ", " + format_tenor(tenor) + ")");
        tenor_set.insert(tenor);
    }
    std::vector<double> tenors(tenor_set.begin(), tenor_set.end());
    return assemble_panel(family_order, tenors, "months", cells, opts.rate_scale);
}

YieldPanel load_wide(const std::vector<RawLine>& lines, const LoadOptions& opts) {
    const auto& header = lines[0].fields;
    if (header.size() < 3)
        throw DataError("wide layout needs at least one tenor column");
    std::vector<double> header_tenors;
    for (std::size_t j = 2; j < header.size(); ++j) {
        double t;
        std::string name = header[j];
        // allow an "m" / "y" prefix as in m1,m2,... column names
        if (!name.empty() && (name[0] == 'm' || name[0] == 'y' || name[0] == 'M' ||
                              name[0] == 'Y'))
            name = name.substr(1);
        if (!parse_double(name, t))
            throw DataError("wide layout: tenor column '" + header[j] +
                            "' is not numeric");
        header_tenors.push_back(t);
    }

    std::map<std::string, std::map<std::string, std::map<double, double>>> cells;
    std::vector<std::string> family_order;
    std::set<std::pair<std::string, std::string>> seen;

    for (std::size_t i = 1; i < lines.size(); ++i) {
        const auto& ln = lines[i];
        if (ln.fields.size() != header.size())
            throw DataError("line " + std::to_string(ln.number) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(ln.fields.size()));
        const std::string& fam = ln.fields[0];
        const std::string& date = ln.fields[1];
        if (fam.empty() || date.empty())
            throw DataError("line " + std::to_string(ln.number) + ": empty family or date");
        if (!seen.insert({fam, date}).second)
            throw DataError("line " + std::to_string(ln.number) + ": duplicate row for (" +
                            fam + ", " + date + ")");
        if (cells.find(fam) == cells.end()) family_order.push_back(fam);
        for (std::size_t j = 0; j < header_tenors.size(); ++j) {
            double rate;
            if (!parse_double(ln.fields[j + 2], rate))
                throw DataError("line " + std::to_string(ln.number) + ": bad rate '" +
                                ln.fields[j + 2] + "' for tenor " +
                                format_tenor(header_tenors[j]));
            cells[fam][date][header_tenors[j]] = rate;
        }
    }
    std::vector<double> sorted = header_tenors;
    std::sort(sorted.begin(), sorted.end());
    return assemble_panel(family_order, sorted, "months", cells, opts.rate_scale);
}

}  // namespace

YieldPanel load_panel(const std::string& path, const LoadOptions& opts) {
    auto lines = read_csv_lines(path);
    const auto& header = lines[0].fields;
    if (header.size() < 2 || detail::lower(header[0]) != "family" ||
        detail::lower(header[1]) != "date")
        throw DataError("'" + path + "': header must start with family,date");

    PanelLayout layout;
    if (opts.layout) {
        layout = *opts.layout;
    } else if (header.size() == 4 && detail::lower(header[2]) == "tenor" &&
               detail::lower(header[3]) == "rate") {
        layout = PanelLayout::Long;
    } else {
        layout = PanelLayout::Wide;
    }
    return layout == PanelLayout::Long ? load_long(lines, opts) : load_wide(lines, opts);
}

void save_panel(const YieldPanel& panel, const std::string& path, PanelLayout layout,
                const std::vector<std::string>& header_comments) {
    panel.validate();
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const auto& c : header_comments) out << "# " << c << "\n";
    if (layout == PanelLayout::Long) {
        out << "family,date,tenor,rate\n";
        for (int f = 0; f < panel.n_families(); ++f)
            for (int t = 0; t < panel.n_dates(); ++t)
                for (int j = 0; j < panel.n_tenors(); ++j)
                    out << panel.families[static_cast<std::size_t>(f)].id << ','
                        << panel.dates[static_cast<std::size_t>(t)] << ','
                        << panel.grid.tenors(j) << ','
                        << panel.rates[static_cast<std::size_t>(f)](t, j) << '\n';
    } else {
        out << "family,date";
        for (int j = 0; j < panel.n_tenors(); ++j) out << ',' << panel.grid.tenors(j);
        out << '\n';
        for (int f = 0; f < panel.n_families(); ++f)
            for (int t = 0; t < panel.n_dates(); ++t) {
                out << panel.families[static_cast<std::size_t>(f)].id << ','
                    << panel.dates[static_cast<std::size_t>(t)];
                for (int j = 0; j < panel.n_tenors(); ++j)
                    out << ',' << panel.rates[static_cast<std::size_t>(f)](t, j);
                out << '\n';
            }
    }
}

std::pair<YieldPanel, YieldPanel> split(const YieldPanel& panel, const SplitSpec& spec) {
    panel.validate();
    // first index strictly after t0
    int cut = 0;
    while (cut < panel.n_dates() &&
           !(spec.t0 < panel.dates[static_cast<std::size_t>(cut)]))
        ++cut;
    if (cut == 0)
        throw DataError("split: t0 '" + spec.t0 + "' precedes the first panel date");
    if (cut == panel.n_dates())
        throw DataError("split: no dates after t0 '" + spec.t0 + "'");

    auto slice = [&](int b, int e) {
        YieldPanel part;
        part.families = panel.families;
        part.grid = panel.grid;
        part.dates.assign(panel.dates.begin() + b, panel.dates.begin() + e);
        for (const auto& m : panel.rates)
            part.rates.push_back(m.middleRows(b, e - b));
        return part;
    };
    return {slice(0, cut), slice(cut, panel.n_dates())};
}

std::vector<WindowSample> make_windows(const YieldPanel& panel, int lookback) {
    panel.validate();
    if (lookback < 0) throw ConfigError("make_windows: negative look-back");
    const int T = panel.n_dates();
    if (T < lookback + 2)
        throw DataError("make_windows: need at least " + std::to_string(lookback + 2) +
                        " dates, panel has " + std::to_string(T));
    std::vector<WindowSample> out;
    out.reserve(static_cast<std::size_t>(panel.n_families()) *
                static_cast<std::size_t>(T - lookback - 1));
    for (int f = 0; f < panel.n_families(); ++f) {
        const auto& block = panel.rates[static_cast<std::size_t>(f)];
        for (int t = lookback; t + 1 < T; ++t) {
            WindowSample s;
            s.family = panel.families[static_cast<std::size_t>(f)];
            s.history = block.middleRows(t - lookback, lookback + 1);
            s.target = block.row(t + 1).transpose();
            s.as_of = panel.dates[static_cast<std::size_t>(t)];
            out.push_back(std::move(s));
        }
    }
    return out;
}

namespace {

std::vector<std::string> monthly_labels(const std::string& start, int n) {
    int year = 0, month = 0;
    if (std::sscanf(start.c_str(), "%d-%d", &year, &month) != 2 || month < 1 || month > 12)
        throw ConfigError("bad start month '" + start + "', expected YYYY-MM");
    std::vector<std::string> labels;
    labels.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
        labels.emplace_back(buf);
        if (++month == 13) {
            month = 1;
            ++year;
        }
    }
    return labels;
}

double spectral_radius(const Eigen::MatrixXd& A) {
    return Eigen::EigenSolver<Eigen::MatrixXd>(A, false).eigenvalues().cwiseAbs().maxCoeff();
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& E) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (E + E.transpose()));
    if (es.eigenvalues().minCoeff() < -1e-10)
        throw DataError("innovation covariance is not positive semidefinite");
    Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * s.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

YieldPanel synth_panel(const GeneratorSpec& spec, std::uint64_t seed) {
    const int k = factor_count(spec.model);
    if (spec.families.empty()) throw ConfigError("generator: no families");
    if (spec.n_dates < 1) throw ConfigError("generator: n_dates must be positive");
    if (spec.beta_start.size() != k)
        throw ConfigError("generator: beta_start has wrong length");
    if (spec.lambdas.size() != (spec.model == CurveModel::NS ? 1 : 2))
        throw ConfigError("generator: wrong number of decays");
    if (spec.sigma_eps < 0) throw ConfigError("generator: negative sigma_eps");

    Eigen::MatrixXd innovation_sqrt;  // k x k, VAR only
    if (const auto* ar = std::get_if<ArPathSpec>(&spec.dynamics)) {
        if (ar->psi0.size() != k || ar->psi1.size() != k || ar->sigma.size() != k)
            throw ConfigError("generator: AR spec dimensions do not match factor count");
        if (ar->psi1.cwiseAbs().maxCoeff() >= 1.0)
            throw DataError("generator: non-stationary AR spec (|psi1| >= 1)");
        if (ar->sigma.minCoeff() < 0) throw ConfigError("generator: negative AR sigma");
    } else {
        const auto& var = std::get<VarPathSpec>(spec.dynamics);
        if (var.a0.size() != k || var.A.rows() != k || var.A.cols() != k ||
            var.E.rows() != k || var.E.cols() != k)
            throw ConfigError("generator: VAR spec dimensions do not match factor count");
        if (spectral_radius(var.A) >= 1.0)
            throw DataError("generator: non-stationary VAR spec (spectral radius >= 1)");
        innovation_sqrt = psd_sqrt(var.E);
    }

    YieldPanel panel;
    panel.grid = make_tenor_grid(spec.tenors, spec.tenor_unit);
    panel.dates = monthly_labels(spec.start_month, spec.n_dates);
    const Eigen::MatrixXd loadings = loading_matrix(panel.grid, spec.lambdas, spec.model);
    const int M = static_cast<int>(panel.grid.tenors.size());

    for (std::size_t f = 0; f < spec.families.size(); ++f) {
        const std::string& id = spec.families[f];
        if (panel.family_index(id) >= 0)
            throw ConfigError("generator: duplicate family '" + id + "'");
        panel.families.push_back({id, static_cast<int>(f)});

        RngStream factor_rng(seed, "synth-factors/" + id);
        RngStream noise_rng(seed, "synth-noise/" + id);

        Eigen::MatrixXd block(spec.n_dates, M);
        Eigen::VectorXd beta = spec.beta_start;
        for (int t = 0; t < spec.n_dates; ++t) {
            if (t > 0) {
                if (const auto* ar = std::get_if<ArPathSpec>(&spec.dynamics)) {
                    for (int j = 0; j < k; ++j)
                        beta(j) = ar->psi0(j) + ar->psi1(j) * beta(j) +
                                  ar->sigma(j) * factor_rng.normal();
                } else {
                    const auto& var = std::get<VarPathSpec>(spec.dynamics);
                    beta = var.a0 + var.A * beta + innovation_sqrt * factor_rng.normal_vector(k);
                }
            }
            Eigen::VectorXd curve = loadings * beta;
            if (spec.sigma_eps > 0)
                curve += spec.sigma_eps * noise_rng.normal_vector(M);
            block.row(t) = curve.transpose();
        }
        panel.rates.push_back(std::move(block));
    }
    panel.validate();
    return panel;
}

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::set<std::string>& known,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

Eigen::VectorXd json_vector(const json& a) {
    Eigen::VectorXd v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a.at(i);
    return v;
}

Eigen::MatrixXd json_matrix(const json& a) {
    if (a.empty()) return {};
    Eigen::MatrixXd m(a.size(), a.at(0).size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a.at(i).size() != static_cast<std::size_t>(m.cols()))
            throw ConfigError("ragged matrix in generator spec");
        for (std::size_t j = 0; j < a.at(i).size(); ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a.at(i).at(j);
    }
    return m;
}

}  // namespace

GeneratorSpec load_generator_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
    }
    try {
        reject_unknown_keys(j, {"model", "lambdas", "families", "tenors", "tenor_unit",
                                "n_dates", "beta_start", "dynamics", "sigma_eps",
                                "start_month"},
                            "generator spec");
        GeneratorSpec spec;
        const std::string model = j.at("model");
        if (model == "ns")
            spec.model = CurveModel::NS;
        else if (model == "nss")
            spec.model = CurveModel::NSS;
        else
            throw ConfigError("generator model must be 'ns' or 'nss'");
        spec.lambdas = json_vector(j.at("lambdas"));
        spec.families = j.at("families").get<std::vector<std::string>>();
        spec.tenors = j.at("tenors").get<std::vector<double>>();
        if (j.contains("tenor_unit")) spec.tenor_unit = j.at("tenor_unit");
        spec.n_dates = j.at("n_dates");
        spec.beta_start = json_vector(j.at("beta_start"));
        if (j.contains("sigma_eps")) spec.sigma_eps = j.at("sigma_eps");
        if (j.contains("start_month")) spec.start_month = j.at("start_month");

        const json& dyn = j.at("dynamics");
        const std::string type = dyn.at("type");
        if (type == "ar") {
            reject_unknown_keys(dyn, {"type", "psi0", "psi1", "sigma"}, "dynamics");
            ArPathSpec ar;
            ar.psi0 = json_vector(dyn.at("psi0"));
            ar.psi1 = json_vector(dyn.at("psi1"));
            ar.sigma = json_vector(dyn.at("sigma"));
            spec.dynamics = ar;
        } else if (type == "var") {
            reject_unknown_keys(dyn, {"type", "a0", "A", "E"}, "dynamics");
            VarPathSpec var;
            var.a0 = json_vector(dyn.at("a0"));
            var.A = json_matrix(dyn.at("A"));
            var.E = json_matrix(dyn.at("E"));
            spec.dynamics = var;
        } else {
            throw ConfigError("dynamics type must be 'ar' or 'var'");
        }
        return spec;
    } catch (const json::exception& e) {
        throw ConfigError("generator spec '" + path + "': " + e.what());
    }
}

}  // namespace deepyc
