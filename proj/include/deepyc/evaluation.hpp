#pragma once

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepyc/curve_types.hpp"
#include "deepyc/forecast.hpp"

namespace deepyc {

/// Point and interval accuracy over one instance set. Values are raw (decimal
/// rates); display scaling is applied only when rendering.
struct MetricSlice {
    long n = 0;
    double mse = 0.0;
    double mae = 0.0;
    double picp = 0.0;  // fraction of realized points inside [lower, upper]
    double mpiw = 0.0;  // mean interval width
};

/// Display multipliers used by the report renderer.
inline constexpr double kMseDisplayScale = 1e5;
inline constexpr double kMaeDisplayScale = 1e2;

struct MetricReport {
    std::string model;
    MetricSlice global;
    std::map<std::string, MetricSlice> by_family;
    std::map<double, MetricSlice> by_tenor;
};

/// (mse, mae) over aligned flat vectors of actual and central values.
std::pair<double, double> point_metrics(const Eigen::VectorXd& actual,
                                        const Eigen::VectorXd& central);

/// (picp, mpiw) with closed-interval coverage (boundary points count as
/// covered). Rejects crossed bounds.
std::pair<double, double> interval_metrics(const Eigen::VectorXd& actual,
                                           const Eigen::VectorXd& lower,
                                           const Eigen::VectorXd& upper);

/// Aligns each forecast with the realized curve at the panel date after
/// as_of. Every forecast must resolve to a realized curve; family or date
/// misalignment is a DataError.
MetricReport compute_report(const YieldPanel& actual, const std::vector<ForecastTriple>& forecasts,
                            const std::string& model_name = "");

struct MpiwIdentityReport {
    double member_average = 0.0;  // mean over members of their MPIW
    double ensemble = 0.0;        // MPIW of the averaged forecasts
    double difference = 0.0;
    bool pass = false;            // |difference| <= 1e-12
};

/// Checks that averaging forecasts leaves the mean interval width unchanged:
/// the ensemble MPIW must equal the average of member MPIWs.
MpiwIdentityReport check_mpiw_identity(
    const std::vector<std::vector<ForecastTriple>>& members,
    const std::vector<ForecastTriple>& ensemble);

nlohmann::json report_to_json(const MetricReport& report);

/// Console rendering with the standard display convention
/// (MSE x 1e5, MAE x 1e2), four decimals.
std::string render_report(const MetricReport& report);
std::string format_scaled(double value, double scale);

/// Flat CSV: scope,key,n,mse,mae,picp,mpiw with raw values.
void write_report_csv(const MetricReport& report, const std::string& path,
                      const std::vector<std::string>& header_comments = {});

}  // namespace deepyc
