#pragma once

#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "deepyc/model.hpp"
#include "deepyc/nelson_siegel.hpp"

namespace deepyc {

/// One row per (family, as_of) instance: the embedding concatenated with the
/// flattened feature block, taken before dropout in eval mode.
struct FeatureMatrix {
    Eigen::MatrixXd values;  // rows x (q_embed + (lookback+1)*q_attn)
    std::vector<std::string> family;
    std::vector<std::string> as_of;
};

FeatureMatrix extract_features(const DeepYCModel& model,
                               const std::vector<WindowSample>& windows);

struct PCAResult {
    Eigen::MatrixXd components;        // width x k, orthonormal columns
    Eigen::VectorXd eigenvalues;       // all eigenvalues, non-increasing
    Eigen::VectorXd explained_ratio;   // eigenvalues / trace
    Eigen::MatrixXd scores;            // rows x k projections of centered data
    int n_components = 0;
};

/// PCA of the covariance matrix (optionally the correlation matrix when
/// standardize is set). Eigenvector signs are fixed by making the
/// largest-magnitude loading positive. Zero-variance input is allowed and
/// yields zero eigenvalues.
PCAResult pca(const Eigen::MatrixXd& X, int k, bool standardize = false);

struct CorrelationTable {
    /// family -> mean over (component, factor) pairs of |pearson r|
    std::map<std::string, double> mean_abs_pearson;
    /// pairs dropped because one series was constant
    long skipped_pairs = 0;
    /// pairing scheme note carried into exports
    std::string note;
};

/// For each family, correlates every PCA score column with every latent
/// factor column over the common dates and averages the absolute Pearson
/// correlations across all pairs.
CorrelationTable factor_correlation(const PCAResult& pca_result,
                                    const FeatureMatrix& features,
                                    const std::vector<FactorSeries>& factors);

void write_pca_csv(const PCAResult& r, const std::string& path,
                   const std::vector<std::string>& header_comments = {});
void write_correlation_csv(const CorrelationTable& table, const std::string& path,
                           const std::vector<std::string>& header_comments = {});

}  // namespace deepyc
