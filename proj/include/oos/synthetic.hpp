#pragma once

#include <cstdint>
#include <vector>

#include "oos/data.hpp"

namespace oos {

struct BlobSpec {
    double x = 0.0;
    double y = 0.0;
    double sigma = 1.0;
    size_t count = 0;
};

/// 2-D Gaussian blobs for demos and benchmarks; class names are
/// "blob0".."blobN-1" in spec order.
Dataset make_blobs(const std::vector<BlobSpec>& blobs, uint64_t seed);

/// Circle layout: centers equally spaced on a circle of the given radius.
Dataset make_blob_dataset(size_t n_classes, size_t per_class, double radius, double sigma, uint64_t seed);

/// Benchmark layout: n_classes - n_rogue blobs on the circle plus
/// n_rogue "rogue" blobs at rogue_radius, placed at evenly spaced angles
/// inside [0, arc_degrees] (the open pool's sector). Rogue blobs model
/// out-of-scope intents that resemble open-domain data rather than the
/// known classes.
std::vector<BlobSpec> benchmark_blob_layout(size_t n_classes, size_t n_rogue, size_t per_class,
                                            double radius, double rogue_radius, double sigma,
                                            double arc_degrees);

/// Numeric open-domain pool: points uniform over the annulus sector
/// inner_radius <= r <= outer_radius, angle in [0, arc_degrees].
/// arc_degrees = 360 gives the full ring.
std::vector<Utterance> make_arc_pool(size_t count, double inner_radius, double outer_radius,
                                     double arc_degrees, uint64_t seed);

}  // namespace oos
