#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "oos/outliers.hpp"

namespace oos::cli {

/// Runs one subcommand (split / train / eval / export-embeddings /
/// sweep / make-blobs). args excludes argv[0]. Returns the process exit
/// code: 0 ok, 2 usage, 3 data or model mismatch, 4 numerical failure.
int run(const std::vector<std::string>& args);

// Flag-value parsers, exposed for tests.
std::vector<uint64_t> parse_seed_list(const std::string& text);  // "7", "1,2,3" or "1..10"
BatchRatio parse_ratio(const std::string& text);                 // "ni:no:ns"
std::vector<size_t> parse_hidden(const std::string& text);       // "1024,1024"

/// OOS_THREADS env var, >= 1 (defaults to 1). Caps seed-sweep
/// parallelism.
size_t thread_cap();

}  // namespace oos::cli
