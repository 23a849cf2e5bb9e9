#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "deepyc/autodiff.hpp"
#include "deepyc/curve_types.hpp"
#include "deepyc/forecast.hpp"

namespace deepyc {

/// Att: time-distributed Q/K/V layers plus scaled dot-product attention.
/// Conv: the value branch alone (no attention mixing).
/// AttDe: attention trunk with a mean and a log-variance head instead of
/// quantile-gap heads.
enum class Variant { Att, Conv, AttDe };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

struct DeepYCConfig {
    Variant variant = Variant::Att;
    int lookback = 9;  // window holds lookback+1 curves
    std::vector<double> tenors;
    std::string tenor_unit = "months";
    std::vector<std::string> family_ids;
    int q_embed = 2;
    int q_attn = 8;
    double dropout_keep = 0.5;
    double alpha = 0.95;  // nominal coverage of the forecast interval
    int gamma = 1;        // 1: median head (absolute error), 2: mean head (squared error)
    ad::Activation act_qkv = ad::Activation::Tanh;
    ad::Activation act_central = ad::Activation::Linear;
    ad::Activation act_gap = ad::Activation::Softplus;

    /// Input width expected by the Q/K/V layers. Equals n_tenors() except in
    /// transferred models, where a learned adapter maps each input row from
    /// n_tenors() to trunk_in.
    int trunk_in = 0;
    bool has_adapter = false;

    int n_tenors() const { return static_cast<int>(tenors.size()); }
    int n_families() const { return static_cast<int>(family_ids.size()); }
    int feature_width() const { return (lookback + 1) * q_attn; }
    int family_index(const std::string& id) const;
    TenorGrid grid() const;

    void validate() const;
    nlohmann::json to_json() const;
    static DeepYCConfig from_json(const nlohmann::json& j);
};

struct DeepYCModel {
    DeepYCConfig config;
    ad::ParamStore params;
};

/// Fresh parameters: uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases,
/// N(0, 0.1^2) embeddings. Deterministic in the stream.
DeepYCModel init_model(const DeepYCConfig& config, RngStream& init_rng);

/// Intermediate graph handles of one forward pass; used for training, feature
/// extraction and tests.
struct ForwardGraph {
    ad::Var features;      // (lookback+1) x q_attn
    ad::Var flat;          // feature vector before dropout
    ad::Var flat_dropped;
    ad::Var embedding;     // q_embed x 1
    ad::Var central;       // n_tenors x 1
    ad::Var lower;         // quantile variants
    ad::Var upper;
    ad::Var log_var;       // AttDe variant
};

/// History must be (lookback+1) x n_tenors and family_index must be valid for
/// the config. dropout_rng is required in train mode.
ForwardGraph build_forward(ad::Tape& tape, const DeepYCModel& model,
                           const Eigen::MatrixXd& history, int family_index, ad::Mode mode,
                           RngStream* dropout_rng);

/// Eval-mode forecasts are pure functions of (params, input). Quantile
/// variants are strictly ordered lower < central < upper by construction;
/// the AttDe variant fills sd and derives bounds as central -/+ z * sd.
ForecastTriple forward(const DeepYCModel& model, const WindowSample& sample,
                       ad::Mode mode = ad::Mode::Eval, RngStream* dropout_rng = nullptr);

/// Composite training objective summed over batch instances and tenors:
/// pinball at level (1-alpha)/2 for the lower head, absolute or squared error
/// for the central head, pinball at (1+alpha)/2 for the upper head. The AttDe
/// variant instead sums the heteroscedastic Gaussian criterion
/// (y-mu)^2/sigma^2 + log(sigma^2)/2.
ad::Var build_loss(ad::Tape& tape, const DeepYCModel& model,
                   const std::vector<WindowSample>& batch, ad::Mode mode,
                   RngStream* dropout_rng);

/// Loss evaluated without dropout, for reporting.
double eval_loss(const DeepYCModel& model, const std::vector<WindowSample>& batch);

struct TrainSpec {
    int epochs = 100;
    int batch_size = 32;
    std::uint64_t seed = 1;
    ad::AdamConfig adam;
    bool shuffle = true;
};

/// Mini-batch Adam on the composite loss. Deterministic given the seed; the
/// returned history holds the mean per-sample training loss of each epoch.
/// Throws NumericError with epoch/batch context if the loss degenerates.
std::vector<double> train(DeepYCModel& model, const std::vector<WindowSample>& windows,
                          const TrainSpec& spec);

struct EnsembleModel {
    std::vector<DeepYCModel> members;
};

/// Trains n_members models from seeds spec.seed+0 .. spec.seed+n-1. Members
/// are independent; with jobs > 1 they train concurrently with identical
/// results.
EnsembleModel train_ensemble(const DeepYCConfig& config,
                             const std::vector<WindowSample>& windows, const TrainSpec& spec,
                             int n_members = 10, int jobs = 1);

/// Eval-mode forecasts for every (panel family, as_of date). Each as_of needs
/// lookback prior dates in the panel; the panel grid and families must match
/// the checkpointed config.
std::vector<ForecastTriple> predict(const DeepYCModel& model, const YieldPanel& panel,
                                    const std::vector<std::string>& as_of_dates);

/// Componentwise mean of the member forecasts (lower, central and upper
/// averaged separately), which keeps the bound ordering.
std::vector<ForecastTriple> predict(const EnsembleModel& ensemble, const YieldPanel& panel,
                                    const std::vector<std::string>& as_of_dates);

struct DeForecast {
    ForecastTriple triple;
    Eigen::VectorXd sd;  // per-tenor forecast standard deviation
};

/// AttDe forecast: central from the mean head, sd = exp(log_var/2), bounds at
/// the Gaussian alpha-quantiles. Throws ConfigError for non-AttDe models.
DeForecast de_forward(const DeepYCModel& model, const WindowSample& sample);

struct TransferResult {
    DeepYCModel model;
    std::vector<double> loss_history;
};

/// Reuses a trained trunk on a new curve set: a fresh time-distributed linear
/// adapter maps rows of the new panel's width onto the source width, a fresh
/// embedding covers the new families, and fresh heads emit the new tenor
/// count. The source Q/K/V parameters are copied frozen and verified
/// bit-identical after training.
TransferResult transfer(const DeepYCModel& source, const TenorGrid& new_grid,
                        const std::vector<std::string>& new_family_ids,
                        const std::vector<WindowSample>& windows, const TrainSpec& spec);

/// Names of the frozen trunk parameters shared between a source model and its
/// transfer targets.
std::vector<std::string> trunk_param_names(const DeepYCConfig& config);

void save_checkpoint(const DeepYCModel& model, const std::string& path,
                     const std::string& config_hash = "");
DeepYCModel load_checkpoint(const std::string& path);

}  // namespace deepyc
