#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepyc/curve_data.hpp"
#include "deepyc/evaluation.hpp"
#include "deepyc/model.hpp"

namespace deepyc::pipeline {

/// One reproducible run, loaded from a strict JSON file (unknown keys are
/// rejected). Every artifact a run writes is stamped with the hash of this
/// configuration.
struct RunConfig {
    std::string panel_path;
    double rate_scale = 1.0;
    std::string t0;

    Variant variant = Variant::Att;
    int lookback = 9;
    int q_attn = 8;
    int q_embed = 2;
    double dropout_keep = 0.5;
    double alpha = 0.95;
    int gamma = 1;

    TrainSpec train;
    int n_members = 10;
    int jobs = 1;
    std::string out_dir;

    nlohmann::json canonical;  // validated configuration as parsed
    std::string hash() const;
};

RunConfig load_run_config(const std::string& path);
RunConfig run_config_from_json(const nlohmann::json& j);

/// Writes content to `path` atomically (temp file + rename).
void atomic_write_text(const std::string& path, const std::string& content);

struct PanelSummary {
    std::vector<std::string> families;
    std::string first_date, last_date;
    int n_dates = 0;
    std::string grid;
    long n_points = 0;
};

PanelSummary summarize(const YieldPanel& panel);

/// `ingest`: loads and validates a panel, optionally re-exporting it.
PanelSummary run_ingest(const std::string& panel_path, double rate_scale,
                        const std::optional<std::string>& export_path,
                        PanelLayout export_layout = PanelLayout::Long);

enum class Dynamics { AR, VAR };
Dynamics dynamics_from_string(const std::string& s);

struct BenchmarkResult {
    MetricReport report;
    std::string forecast_path;
    std::string report_path;
    std::string factors_path;           // learning-sample factor paths
    Eigen::VectorXd lambdas_used;
    std::vector<std::string> warnings;  // e.g. non-stationary fitted dynamics
};

/// `fit-benchmark`: calibrates factors with fixed decays on the learning
/// sample, fits AR or VAR dynamics, and issues a Gaussian interval forecast
/// for every testing date. lambdas may be empty for the defaults; a non-empty
/// lambda_grid instead selects the decay(s) minimizing the pooled squared
/// calibration error on the learning sample (pairs of distinct grid values
/// for the four-factor model).
BenchmarkResult run_fit_benchmark(const std::string& panel_path, double rate_scale,
                                  const std::string& t0, CurveModel model, Dynamics dynamics,
                                  double alpha, const Eigen::VectorXd& lambdas,
                                  const std::string& out_dir,
                                  const std::vector<double>& lambda_grid = {});

struct TrainOutputs {
    std::vector<std::string> checkpoint_paths;
    std::string loss_history_path;
};

/// `train`: learning-sample windows, ensemble of n_members, checkpoints plus
/// per-epoch loss curves under out_dir.
TrainOutputs run_train(const RunConfig& cfg);

struct ForecastOutputs {
    std::string ensemble_path;
    std::vector<std::string> member_paths;
};

/// `forecast`: eval-mode forecasts from the run's checkpoints for every
/// testing date with a realized target; origins are the dates preceding them.
ForecastOutputs run_forecast(const RunConfig& cfg, bool per_member = true);

struct EvaluateOutputs {
    MetricReport report;
    std::optional<MpiwIdentityReport> identity;
    std::string report_path;
};

/// `evaluate`: metrics of a forecast file against the realized panel; when
/// member files are supplied the width identity of the averaged forecast is
/// checked as well.
EvaluateOutputs run_evaluate(const std::string& panel_path, double rate_scale,
                             const std::string& forecast_path,
                             const std::vector<std::string>& member_paths,
                             const std::string& report_path, const std::string& model_name);

struct TransferOutputs {
    std::vector<std::string> checkpoint_paths;
    std::string loss_history_path;
};

/// `transfer`: fits adapters, embeddings and heads for the run's panel on top
/// of the frozen trunk of a source checkpoint.
TransferOutputs run_transfer(const RunConfig& cfg, const std::string& source_checkpoint);

struct DiagnoseOutputs {
    std::string pca_path;
    std::string correlation_path;
    Eigen::VectorXd explained_ratio;
};

/// `diagnose`: extracts features on the learning sample, reduces them to
/// n_components principal components and correlates the scores with the
/// four-factor latent paths fitted on the same sample.
DiagnoseOutputs run_diagnose(const std::string& checkpoint_path, const std::string& panel_path,
                             double rate_scale, const std::string& t0, int n_components,
                             const std::string& out_dir);

}  // namespace deepyc::pipeline
