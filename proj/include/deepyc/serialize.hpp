#pragma once

#include <nlohmann/json.hpp>

#include "deepyc/autodiff.hpp"

namespace deepyc {

/// Versioned parameter serialization. Values round-trip exactly (the JSON
/// writer emits shortest round-trip decimals) and key order is deterministic.
nlohmann::json params_to_json(const ad::ParamStore& params);
ad::ParamStore params_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

/// Hash of a canonical JSON dump; stamped into every artifact a command writes.
std::string config_hash(const nlohmann::json& config);

}  // namespace deepyc
