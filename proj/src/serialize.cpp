#include "deepyc/serialize.hpp"

#include <cstdio>

#include "deepyc/errors.hpp"

namespace deepyc {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
    json j;
    j["rows"] = m.rows();
    j["cols"] = m.cols();
    json data = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(i, c));
    j["data"] = std::move(data);
    return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    const Eigen::Index rows = j.at("rows");
    const Eigen::Index cols = j.at("cols");
    const auto& data = j.at("data");
    if (static_cast<Eigen::Index>(data.size()) != rows * cols)
        throw DataError("matrix payload size does not match its shape");
    Eigen::MatrixXd m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = data.at(k++);
    return m;
}

json params_to_json(const ad::ParamStore& params) {
    json j;
    j["format"] = "deepyc-params";
    j["version"] = 1;
    json entries = json::object();
    for (const auto& [name, entry] : params.entries()) {
        json e = matrix_to_json(entry.value);
        e["trainable"] = entry.trainable;
        entries[name] = std::move(e);
    }
    j["params"] = std::move(entries);
    return j;
}

ad::ParamStore params_from_json(const json& j) {
    if (j.at("format") != "deepyc-params")
        throw DataError("not a parameter payload");
    if (j.at("version") != 1)
        throw DataError("unsupported parameter payload version");
    ad::ParamStore store;
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it)
        store.add(it.key(), matrix_from_json(it.value()), it.value().at("trainable"));
    return store;
}

std::string config_hash(const json& config) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(config.dump())));
    return buf;
}

}  // namespace deepyc
