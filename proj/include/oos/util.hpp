#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace oos {

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& content);

/// FNV-1a 64-bit over a byte range. Used for dataset fingerprints in run
/// manifests (not cryptographic).
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);
uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(uint64_t value);

/// Fixed-precision float formatting for CSV output ("%.6f").
std::string format_fixed(double value, int digits = 6);

double mean_of(const std::vector<double>& values);
/// Population standard deviation (divides by n).
double stddev_of(const std::vector<double>& values);

}  // namespace oos
