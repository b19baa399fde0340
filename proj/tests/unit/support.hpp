#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "oos/classifier.hpp"
#include "oos/data.hpp"
#include "oos/encoder.hpp"

namespace oos::test {

/// Scratch directory under the system temp root, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("oos_" + tag);
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline Utterance numeric_utterance(std::string id, std::vector<double> values) {
    Utterance u;
    u.id = std::move(id);
    u.numeric = std::move(values);
    return u;
}

inline Utterance text_utterance(std::string id, std::string text) {
    Utterance u;
    u.id = std::move(id);
    u.text = std::move(text);
    return u;
}

/// |a - b| relative to max(|a|, |b|); near-zero pairs compare absolutely.
inline double rel_err(double a, double b, double zero_floor = 1e-8) {
    const double denom = std::max(std::fabs(a), std::fabs(b));
    if (denom < zero_floor) return std::fabs(a - b);
    return std::fabs(a - b) / denom;
}

/// Central finite difference of `loss_at(param_value)` with the realized
/// f32 step: the perturbed values are rounded to float exactly as the
/// parameter store would hold them, and the difference is divided by the
/// realized gap. Keeps the estimate honest for f32-backed parameters.
template <typename LossFn>
double fd_gradient_f32(float current, double step, const LossFn& loss_at) {
    const float plus = static_cast<float>(static_cast<double>(current) + step);
    const float minus = static_cast<float>(static_cast<double>(current) - step);
    const double gap = static_cast<double>(plus) - static_cast<double>(minus);
    const double l_plus = loss_at(plus);
    const double l_minus = loss_at(minus);
    return (l_plus - l_minus) / gap;
}

}  // namespace oos::test
