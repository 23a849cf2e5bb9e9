#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Dense>

namespace deepyc {

/// Counter-based pseudo-random stream.
///
/// A stream is identified by (root seed, name). Draws are produced by mixing
/// a per-stream base state with an increasing counter (splitmix64 finalizer),
/// so streams derived from the same root are independent of the order in
/// which they are consumed. Every stochastic operation in the library takes
/// an explicit stream; nothing reads hidden global state.
class RngStream {
public:
    RngStream(std::uint64_t seed, const std::string& name);

    std::uint64_t next_u64();

    /// Uniform draw strictly inside (0, 1).
    double uniform();

    /// Uniform draw in [lo, hi).
    double uniform(double lo, double hi);

    /// Standard normal via inverse-CDF transform of a single uniform.
    double normal();

    double normal(double mean, double sd);

    /// Bernoulli(p) as 0/1 with p = probability of 1.
    double bernoulli(double p);

    Eigen::VectorXd normal_vector(Eigen::Index n);
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

    /// Fisher-Yates shuffle of [0, n) index vector.
    std::vector<int> permutation(int n);

private:
    std::uint64_t base_;
    std::uint64_t counter_ = 0;
};

/// Stable 64-bit FNV-1a hash, used for stream derivation and config hashes.
std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace deepyc
