#include "deepyc/random.hpp"

#include <vector>

#include "deepyc/errors.hpp"
#include "deepyc/stats.hpp"

namespace deepyc {
namespace {

// splitmix64 finalizer (Steele, Lea, Flood 2014)
std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

RngStream::RngStream(std::uint64_t seed, const std::string& name)
    : base_(mix64(seed ^ fnv1a64(name))) {}

std::uint64_t RngStream::next_u64() {
    return mix64(base_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
}

double RngStream::uniform() {
    // 52 random bits shifted into (0,1); the +0.5 keeps the draw off both ends.
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1p-52;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
    return normal_quantile(uniform());
}

double RngStream::normal(double mean, double sd) {
    return mean + sd * normal();
}

double RngStream::bernoulli(double p) {
    if (p < 0.0 || p > 1.0) throw ConfigError("bernoulli probability outside [0,1]");
    return uniform() < p ? 1.0 : 0.0;
}

Eigen::VectorXd RngStream::normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = normal();
    return v;
}

Eigen::MatrixXd RngStream::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    // row-major fill so the draw sequence is independent of Eigen's storage order
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
}

std::vector<int> RngStream::permutation(int n) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        int j = static_cast<int>(next_u64() % static_cast<std::uint64_t>(i + 1));
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    return idx;
}

}  // namespace deepyc
