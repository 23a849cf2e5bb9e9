#include "deepyc/diagnostics.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <Eigen/Eigenvalues>

#include "deepyc/errors.hpp"
#include "deepyc/stats.hpp"

namespace deepyc {

FeatureMatrix extract_features(const DeepYCModel& model,
                               const std::vector<WindowSample>& windows) {
    if (windows.empty()) throw DataError("extract_features: no windows");
    const auto& c = model.config;
    const int width = c.q_embed + c.feature_width();

    FeatureMatrix out;
    out.values.resize(static_cast<Eigen::Index>(windows.size()), width);
    out.family.reserve(windows.size());
    out.as_of.reserve(windows.size());

    for (std::size_t i = 0; i < windows.size(); ++i) {
        const auto& w = windows[i];
        const int fam = c.family_index(w.family.id);
        if (fam < 0)
            throw DataError("extract_features: family '" + w.family.id +
                            "' is unknown to the model");
        ad::Tape tape;
        ForwardGraph g = build_forward(tape, model, w.history, fam, ad::Mode::Eval, nullptr);
        out.values.block(static_cast<Eigen::Index>(i), 0, 1, c.q_embed) =
            g.embedding.value().col(0).transpose();
        out.values.block(static_cast<Eigen::Index>(i), c.q_embed, 1, c.feature_width()) =
            g.flat.value().col(0).transpose();  // pre-dropout features
        out.family.push_back(w.family.id);
        out.as_of.push_back(w.as_of);
    }
    return out;
}

PCAResult pca(const Eigen::MatrixXd& X, int k, bool standardize) {
    const Eigen::Index n = X.rows();
    const Eigen::Index width = X.cols();
    if (n < 2) throw DataError("pca: need at least two rows");
    if (k < 1 || k > width) throw ConfigError("pca: component count outside [1, width]");
    if (!X.allFinite()) throw DataError("pca: non-finite input");

    Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
    if (standardize) {
        for (Eigen::Index j = 0; j < width; ++j) {
            const double sd =
                std::sqrt(centered.col(j).squaredNorm() / static_cast<double>(n - 1));
            if (sd > 0) centered.col(j) /= sd;
        }
    }
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    if (es.info() != Eigen::Success) throw NumericError("pca: eigensolver failed");

    // eigenvalues ascending from the solver; flip to non-increasing
    PCAResult r;
    r.n_components = k;
    r.eigenvalues = es.eigenvalues().reverse();
    r.eigenvalues = r.eigenvalues.cwiseMax(0.0);  // clip eigen-noise below zero
    const double trace = r.eigenvalues.sum();
    r.explained_ratio =
        trace > 0 ? Eigen::VectorXd(r.eigenvalues / trace)
                  : Eigen::VectorXd(Eigen::VectorXd::Zero(r.eigenvalues.size()));

    r.components.resize(width, k);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd v = es.eigenvectors().col(width - 1 - j);
        Eigen::Index imax;
        v.cwiseAbs().maxCoeff(&imax);
        if (v(imax) < 0) v = -v;  // deterministic sign
        r.components.col(j) = v;
    }
    r.scores = centered * r.components;
    return r;
}

CorrelationTable factor_correlation(const PCAResult& pca_result,
                                    const FeatureMatrix& features,
                                    const std::vector<FactorSeries>& factors) {
    if (pca_result.scores.rows() != static_cast<Eigen::Index>(features.family.size()))
        throw DataError("factor_correlation: scores do not match feature labels");

    CorrelationTable table;
    table.note = "mean |pearson r| over all (component, factor) pairs";

    for (const auto& fs : factors) {
        // collect instance rows of this family that have a factor row at the same date
        std::vector<Eigen::Index> rows;
        std::vector<Eigen::Index> factor_rows;
        for (std::size_t i = 0; i < features.family.size(); ++i) {
            if (features.family[i] != fs.family.id) continue;
            auto it = std::find(fs.dates.begin(), fs.dates.end(), features.as_of[i]);
            if (it == fs.dates.end()) continue;
            rows.push_back(static_cast<Eigen::Index>(i));
            factor_rows.push_back(static_cast<Eigen::Index>(it - fs.dates.begin()));
        }
        if (rows.size() < 2) continue;

        const auto n = static_cast<Eigen::Index>(rows.size());
        double total = 0.0;
        long used = 0;
        for (int pc = 0; pc < pca_result.n_components; ++pc) {
            Eigen::VectorXd score(n);
            for (Eigen::Index i = 0; i < n; ++i) score(i) = pca_result.scores(rows[static_cast<std::size_t>(i)], pc);
            for (Eigen::Index b = 0; b < fs.values.cols(); ++b) {
                Eigen::VectorXd beta(n);
                for (Eigen::Index i = 0; i < n; ++i)
                    beta(i) = fs.values(factor_rows[static_cast<std::size_t>(i)], b);
                if (auto r = pearson(score, beta)) {
                    total += std::abs(*r);
                    ++used;
                } else {
                    ++table.skipped_pairs;
                }
            }
        }
        if (used > 0)
            table.mean_abs_pearson[fs.family.id] = total / static_cast<double>(used);
    }
    return table;
}

void write_pca_csv(const PCAResult& r, const std::string& path,
                   const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const auto& c : header_comments) out << "# " << c << "\n";
    out << "eigen_index,eigenvalue,explained_ratio\n";
    for (Eigen::Index i = 0; i < r.eigenvalues.size(); ++i)
        out << i + 1 << ',' << r.eigenvalues(i) << ',' << r.explained_ratio(i) << '\n';
    out << "component,feature_index,loading\n";
    for (int j = 0; j < r.n_components; ++j)
        for (Eigen::Index i = 0; i < r.components.rows(); ++i)
            out << j + 1 << ',' << i << ',' << r.components(i, j) << '\n';
}

void write_correlation_csv(const CorrelationTable& table, const std::string& path,
                           const std::vector<std::string>& header_comments) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    for (const auto& c : header_comments) out << "# " << c << "\n";
    out << "# " << table.note << "\n";
    if (table.skipped_pairs > 0)
        out << "# skipped constant-series pairs: " << table.skipped_pairs << "\n";
    out << "family,mean_abs_pearson\n";
    for (const auto& [family, value] : table.mean_abs_pearson)
        out << family << ',' << value << '\n';
}

}  // namespace deepyc
