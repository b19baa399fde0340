#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "oos/encoder.hpp"
#include "oos/rng.hpp"

namespace oos {

struct EmbeddedExample {
    FeatureVector features;
    int label = 0;  // in [0, K]; K marks an outlier of either kind
};

/// Per-batch counts of inliers, open-domain outliers and synthetic
/// outliers. Default proportions 1:1:4.
struct BatchRatio {
    size_t inliers = 100;
    size_t open = 100;
    size_t synthetic = 400;
};

struct TrainBatch {
    std::vector<EmbeddedExample> examples;
    BatchRatio counts;  // realized partition by provenance
};

/// Audit record for one synthetic outlier: parent classes, parent member
/// indices within their class lists, and the mixing coefficient.
struct SynthRecord {
    int class_alpha = 0;
    int class_beta = 0;
    size_t index_alpha = 0;
    size_t index_beta = 0;
    double theta = 0.0;
};

/// theta * h_beta + (1 - theta) * h_alpha, clamped componentwise into
/// [min(parent), max(parent)] to keep the convexity invariant exact under
/// float roundoff.
FeatureVector convex_combine(const FeatureVector& h_alpha, const FeatureVector& h_beta, double theta);

/// Draws `count` synthetic outliers. Each draw picks two distinct classes
/// uniformly, one vector uniformly from each, and theta ~ U(0,1).
std::vector<FeatureVector> synthesize_outliers(const std::map<int, std::vector<FeatureVector>>& by_class,
                                               size_t count, Rng& rng,
                                               std::vector<SynthRecord>* trace = nullptr);

/// Uniform sample with replacement from the pool.
std::vector<FeatureVector> sample_open_outliers(const std::vector<FeatureVector>& pool, size_t count,
                                                Rng& rng);

/// Builds a training batch: the given inliers plus ratio.open open-domain
/// outliers and ratio.synthetic synthetic outliers, all labeled
/// oos_label. Synthetic parents come from this batch's inliers.
TrainBatch compose_batch(const std::vector<EmbeddedExample>& inliers, const std::vector<FeatureVector>& pool,
                         const BatchRatio& ratio, int oos_label, Rng& rng,
                         std::vector<SynthRecord>* trace = nullptr);

/// Non-empty when the synthetic quota is extreme relative to the inlier
/// count (past ~20x the unknown-class signal starts to degrade).
std::optional<std::string> ratio_guardrail_warning(const BatchRatio& ratio);

/// Audit serialization: one json line per synthetic outlier with parent
/// classes, parent indices and theta.
std::string synth_trace_jsonl(const std::vector<SynthRecord>& trace, size_t epoch, size_t batch);

}  // namespace oos
