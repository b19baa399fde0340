#pragma once

#include <stdexcept>
#include <string>

namespace oos {

/// Bad flags, bad config values, unusable arguments. CLI exit code 2.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent input data, or a model/data mismatch
/// (e.g. checkpoint K differs from the split). CLI exit code 3.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Non-finite loss, divergence, corrupt numeric state. CLI exit code 4.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDataMismatch = 3;
constexpr int kExitNumerical = 4;

}  // namespace oos
