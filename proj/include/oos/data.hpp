#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace oos {

/// A single input item. Exactly one of text/numeric is populated: text
/// for sentence datasets, numeric for identity-encoder datasets.
struct Utterance {
    std::string id;
    std::optional<std::string> text;
    std::optional<std::vector<double>> numeric;

    bool has_text() const { return text.has_value(); }
    bool has_numeric() const { return numeric.has_value(); }
};

struct LabeledUtterance {
    Utterance utterance;
    std::string label;
};

/// A labeled dataset. class_names is in first-appearance order and every
/// example's label is one of them; ids are unique.
struct Dataset {
    std::vector<LabeledUtterance> examples;
    std::vector<std::string> class_names;
};

/// Known/unknown class-holdout parameters. known_ratio in (0, 1]; 1.0
/// keeps every class known (no out-of-scope test rows).
struct SplitSpec {
    double known_ratio = 0.75;
    uint64_t seed = 0;
};

/// The K known classes plus the reserved out-of-scope index K.
struct LabelSpace {
    std::vector<std::string> known_classes;
    int oos_index = 0;  // == known_classes.size()

    int k() const { return static_cast<int>(known_classes.size()); }
    /// Index for a known class name, or -1.
    int index_of(const std::string& name) const;
};

struct TestExample {
    Utterance utterance;
    int label = 0;          // in [0, K]; K for held-out classes
    std::string gold_name;  // original class name, kept for audit
};

struct SplitResult {
    Dataset train;       // known classes only
    Dataset validation;  // known classes only
    std::vector<TestExample> test;
    LabelSpace label_space;
};

enum class DatasetFormat { jsonl, csv };

/// Loads a dataset. jsonl records look like
///   {"id": "u1", "text": "...", "label": "intentA"}
/// or {"id": "u1", "vec": [0.5, 1.0], "label": "intentA"};
/// csv files carry the header id,text,label. Missing ids are synthesized
/// from the line number. Errors name the offending line.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

/// Picks the format from the file extension (.csv -> csv, else jsonl).
DatasetFormat sniff_format(const std::filesystem::path& path);

/// Class-holdout split. round-half-up(known_ratio * #classes) classes
/// (at least 2, at most #classes-1 when known_ratio < 1) are chosen by a
/// seeded shuffle; held-out classes go entirely to test with label K.
/// Each known class is split test/validation/train disjointly:
/// test_fraction of the class is test, then val_fraction of the remainder
/// is validation.
SplitResult split_known_unknown(const Dataset& dataset, const SplitSpec& spec, double val_fraction,
                                double test_fraction = 0.25);

/// Loads an open-domain pool: plain text (one sentence per line, blanks
/// skipped) or jsonl with `text` or `vec` records. Deduplicated by exact
/// content match.
std::vector<Utterance> load_open_pool(const std::filesystem::path& path);

// Split artifacts on disk: train.jsonl / validation.jsonl / test.jsonl /
// label_space.json under one directory. Byte-deterministic.
void save_split(const SplitResult& split, const std::filesystem::path& dir);
SplitResult load_split(const std::filesystem::path& dir);

}  // namespace oos
