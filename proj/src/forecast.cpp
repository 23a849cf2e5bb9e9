#include "deepyc/forecast.hpp"

#include <fstream>
#include <map>
#include <set>

#include "deepyc/errors.hpp"
#include "text_util.hpp"

namespace deepyc {

void ForecastTriple::validate() const {
    const auto n = central.size();
    if (lower.size() != n || upper.size() != n)
        throw DataError("forecast bound lengths differ");
    if (sd && sd->size() != n) throw DataError("forecast sd length differs");
    if (!lower.allFinite() || !central.allFinite() || !upper.allFinite())
        throw NumericError("non-finite forecast for family '" + family + "'");
    for (Eigen::Index i = 0; i < n; ++i)
        if (!(lower(i) <= central(i) && central(i) <= upper(i)))
            throw NumericError("crossed forecast bounds for family '" + family +
                               "' at as_of '" + as_of + "'");
}

std::vector<ForecastTriple> average_forecasts(
    const std::vector<std::vector<ForecastTriple>>& members) {
    if (members.empty()) throw ConfigError("average_forecasts: no members");
    const std::size_t n = members.front().size();
    for (const auto& m : members)
        if (m.size() != n)
            throw DataError("average_forecasts: members cover different instance sets");

    std::vector<ForecastTriple> out = members.front();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 1; k < members.size(); ++k) {
            const auto& t = members[k][i];
            if (t.family != out[i].family || t.as_of != out[i].as_of)
                throw DataError("average_forecasts: member " + std::to_string(k) +
                                " is misaligned at instance " + std::to_string(i));
            out[i].lower += t.lower;
            out[i].central += t.central;
            out[i].upper += t.upper;
            if (out[i].sd && t.sd) *out[i].sd += *t.sd;
        }
        const double inv = 1.0 / static_cast<double>(members.size());
        out[i].lower *= inv;
        out[i].central *= inv;
        out[i].upper *= inv;
        if (out[i].sd) *out[i].sd *= inv;
    }
    return out;
}

void write_forecast_csv(const std::vector<ForecastTriple>& forecasts, const TenorGrid& grid,
                        const std::string& path, const std::string& model_name,
                        const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const auto& c : header_comments) out << "# " << c << "\n";
    const bool with_sd = !forecasts.empty() && forecasts.front().sd.has_value();
    if (!model_name.empty()) out << "model,";
    out << "family,as_of,tenor,lower,central,upper";
    if (with_sd) out << ",sd";
    out << '\n';
    for (const auto& f : forecasts) {
        f.validate();
        if (f.central.size() != grid.tenors.size())
            throw DataError("forecast for '" + f.family + "' does not match the tenor grid");
        for (Eigen::Index j = 0; j < grid.tenors.size(); ++j) {
            if (!model_name.empty()) out << model_name << ',';
            out << f.family << ',' << f.as_of << ',' << grid.tenors(j) << ',' << f.lower(j)
                << ',' << f.central(j) << ',' << f.upper(j);
            if (with_sd) out << ',' << (*f.sd)(j);
            out << '\n';
        }
    }
}

std::vector<ForecastTriple> read_forecast_csv(const std::string& path, TenorGrid* grid_out) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string line;
    std::vector<std::vector<std::string>> rows;
    std::size_t lineno = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto fields = detail::split_csv(line);
        if (header.empty())
            header = fields;
        else
            rows.push_back(fields);
    }
    if (header.empty()) throw DataError("'" + path + "' contains no data");

    std::size_t base = 0;
    if (!header.empty() && detail::lower(header[0]) == "model") base = 1;
    const std::size_t expect_min = base + 6;
    if (header.size() < expect_min)
        throw DataError("'" + path + "': not a forecast CSV");
    const bool with_sd = header.size() > expect_min;

    struct Key {
        std::string family, as_of;
        bool operator<(const Key& o) const {
            return family != o.family ? family < o.family : as_of < o.as_of;
        }
    };
    std::map<Key, std::map<double, std::array<double, 4>>> cells;
    std::set<double> tenor_set;
    std::vector<Key> order;
    for (const auto& r : rows) {
        if (r.size() != header.size())
            throw DataError("'" + path + "': ragged forecast row");
        Key key{r[base + 0], r[base + 1]};
        double tenor, lo, c, up, sd = 0.0;
        if (!detail::parse_double(r[base + 2], tenor) ||
            !detail::parse_double(r[base + 3], lo) ||
            !detail::parse_double(r[base + 4], c) || !detail::parse_double(r[base + 5], up) ||
            (with_sd && !detail::parse_double(r[base + 6], sd)))
            throw DataError("'" + path + "': bad numeric field in forecast row");
        if (cells.find(key) == cells.end()) order.push_back(key);
        cells[key][tenor] = {lo, c, up, sd};
        tenor_set.insert(tenor);
    }
    std::vector<double> tenors(tenor_set.begin(), tenor_set.end());
    if (grid_out) *grid_out = make_tenor_grid(tenors);

    std::vector<ForecastTriple> out;
    out.reserve(order.size());
    for (const auto& key : order) {
        const auto& by_tenor = cells[key];
        ForecastTriple f;
        f.family = key.family;
        f.as_of = key.as_of;
        const auto m = static_cast<Eigen::Index>(tenors.size());
        f.lower.resize(m);
        f.central.resize(m);
        f.upper.resize(m);
        if (with_sd) f.sd = Eigen::VectorXd(m);
        for (std::size_t j = 0; j < tenors.size(); ++j) {
            auto it = by_tenor.find(tenors[j]);
            if (it == by_tenor.end())
                throw DataError("'" + path + "': missing tenor for (" + key.family + ", " +
                                key.as_of + ")");
            const auto idx = static_cast<Eigen::Index>(j);
            f.lower(idx) = it->second[0];
            f.central(idx) = it->second[1];
            f.upper(idx) = it->second[2];
            if (with_sd) (*f.sd)(idx) = it->second[3];
        }
        f.validate();
        out.push_back(std::move(f));
    }
    return out;
}

}  // namespace deepyc
