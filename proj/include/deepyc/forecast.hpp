#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deepyc/curve_types.hpp"

namespace deepyc {

/// One-step-ahead curve forecast issued at `as_of`: per-tenor lower quantile,
/// central estimate and upper quantile, ordered lower <= central <= upper.
struct ForecastTriple {
    std::string family;
    std::string as_of;   // last observed date the forecast conditions on
    Eigen::VectorXd lower;
    Eigen::VectorXd central;
    Eigen::VectorXd upper;
    double alpha = 0.95;                // nominal coverage of [lower, upper]
    std::optional<Eigen::VectorXd> sd;  // per-tenor forecast sd, when modeled

    void validate() const;  // finite, equal lengths, ordered bounds
};

/// Componentwise mean of aligned forecast sets (lower, central and upper
/// averaged separately). Preserves the bound ordering of the inputs.
std::vector<ForecastTriple> average_forecasts(
    const std::vector<std::vector<ForecastTriple>>& members);

/// CSV schema: family,as_of,tenor,lower,central,upper[,sd] plus an optional
/// model column written before family when `model_name` is non-empty.
void write_forecast_csv(const std::vector<ForecastTriple>& forecasts, const TenorGrid& grid,
                        const std::string& path, const std::string& model_name = "",
                        const std::vector<std::string>& header_comments = {});

/// Reads a forecast CSV written by write_forecast_csv (model column optional).
std::vector<ForecastTriple> read_forecast_csv(const std::string& path, TenorGrid* grid_out = nullptr);

}  // namespace deepyc
