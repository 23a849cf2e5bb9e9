#include "deepyc/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "deepyc/errors.hpp"

namespace deepyc {

double normal_cdf(double z) {
    return 0.5 * std::erfc(-z / std::sqrt(2.0));
}

namespace {

double normal_pdf(double z) {
    static const double inv_sqrt_2pi = 0.3989422804014326779;
    return inv_sqrt_2pi * std::exp(-0.5 * z * z);
}

}  // namespace

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("normal_quantile: p must lie in (0,1)");
    if (p == 0.5) return 0.0;

    // Bracket the root, expanding outward for extreme p.
    double lo = -1.0, hi = 1.0;
    while (normal_cdf(lo) > p) lo *= 2.0;
    while (normal_cdf(hi) < p) hi *= 2.0;

    // Bisection to a coarse root, then Newton to machine-level accuracy.
    for (int i = 0; i < 40; ++i) {
        double mid = 0.5 * (lo + hi);
        if (normal_cdf(mid) < p)
            lo = mid;
        else
            hi = mid;
    }
    double z = 0.5 * (lo + hi);
    for (int i = 0; i < 8; ++i) {
        double f = normal_cdf(z) - p;
        double d = normal_pdf(z);
        if (d <= 0.0) break;
        double step = f / d;
        z -= step;
        if (std::abs(step) < 1e-14) break;
    }
    return z;
}

std::optional<double> pearson(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    const double n = static_cast<double>(x.size());
    Eigen::VectorXd xc = x.array() - x.mean();
    Eigen::VectorXd yc = y.array() - y.mean();
    double sx = xc.norm();
    double sy = yc.norm();
    // Treat a series as constant when its spread is negligible relative to its scale.
    double tolx = 1e-12 * std::max(1.0, x.cwiseAbs().maxCoeff()) * std::sqrt(n);
    double toly = 1e-12 * std::max(1.0, y.cwiseAbs().maxCoeff()) * std::sqrt(n);
    if (sx <= tolx || sy <= toly) return std::nullopt;
    return xc.dot(yc) / (sx * sy);
}

namespace {

Eigen::VectorXd ranks(const Eigen::VectorXd& v) {
    const Eigen::Index n = v.size();
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return v(a) < v(b); });
    Eigen::VectorXd r(n);
    Eigen::Index i = 0;
    while (i < n) {
        Eigen::Index j = i;
        while (j + 1 < n && v(order[static_cast<std::size_t>(j + 1)]) ==
                                v(order[static_cast<std::size_t>(i)]))
            ++j;
        double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // 1-based average rank
        for (Eigen::Index k = i; k <= j; ++k) r(order[static_cast<std::size_t>(k)]) = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

std::optional<double> spearman(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size() || x.size() < 2) return std::nullopt;
    return pearson(ranks(x), ranks(y));
}

}  // namespace deepyc
