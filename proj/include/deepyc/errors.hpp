#pragma once

#include <stdexcept>
#include <string>

namespace deepyc {

/// Bad user input: malformed files, inconsistent panels, schema mismatches.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numerical failure: rank-deficient designs, non-finite values, diverged training.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Invalid configuration or command usage.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace deepyc
